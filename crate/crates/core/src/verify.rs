//! Self-check battery run by `mea verify`.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{boundary_height, sample_interior, BoundaryParam, BoundaryProfile, DomainSpec, FourierSeries, Point};
use crate::hard_bc::{fit_annulus_lift, fit_lift, LiftSpec};
use crate::mea::{
    admissibility_margin, diagonal_direction, tensor_admissible, AiryField, IntegrationReference, LoadModel, MeaContext,
    StressState,
};
use crate::network::{init_mlp, InputNormalization};
use crate::postproc::principal_stresses;
use crate::reference::{
    compare_fields, comparison_cloud, fd_solve_rectangle_with, make_manufactured, ManufacturedCase, ManufacturedSolution,
};
use crate::residual::{pde_residual, CoefficientField, PdeCoefficients, SurfaceField};
use crate::trainer::{train, Formulation, Problem, TrainConfig, TrainOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Closed-form and finite-difference oracles; seconds.
    Oracles,
    /// Desk-scale hard-boundary training against manufactured solutions; minutes.
    Manufactured,
    All,
}

impl FromStr for Suite {
    type Err = MeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracles" => Ok(Self::Oracles),
            "manufactured" => Ok(Self::Manufactured),
            "all" => Ok(Self::All),
            _ => Err(MeaError::Config(format!("unknown suite `{s}`; expected oracles, manufactured or all"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), value, tolerance, passed: value <= tolerance }
    }
}

/// Relative L2 gate for manufactured runs.
pub const MANUFACTURED_GATE: f64 = 5e-3;

/// Desk-scale training budget: 5 000 Adam epochs on 4 096 collocation points. The soft
/// formulation gets a wider network and a larger step; with the hard settings its
/// boundary loss is still falling at the end of the budget.
pub fn desk_config(formulation: Formulation) -> TrainConfig {
    let (width, learning_rate) = match formulation {
        Formulation::Hard => (32, 1e-3),
        Formulation::Soft => (64, 3e-3),
    };
    TrainConfig {
        formulation,
        hidden_layers: Some(3),
        width: Some(width),
        learning_rate,
        adam_epochs: 5_000,
        lbfgs_epochs: 0,
        n_pde: 4_096,
        n_val: 4_096,
        validate_every: 100,
        ..TrainConfig::default()
    }
}

/// Compression context with a diagonal horizontal action and no point loads.
pub fn manufactured_context(domain: &DomainSpec) -> MeaContext {
    let theta = match domain {
        DomainSpec::Rectangle { l, b } => diagonal_direction(*l, *b),
        _ => FRAC_PI_4,
    };
    let alpha = 0.5;
    MeaContext {
        airy: AiryField::new(2.0, 0.0, 2.0, StressState::Compression),
        loads: LoadModel {
            rho: 18.0,
            thickness: 0.1,
            point_loads: vec![],
            alpha_h: alpha,
            theta_h: theta,
            reference: IntegrationReference::Upwind.resolve(domain, alpha * theta.cos(), alpha * theta.sin()),
        },
    }
}

/// The three manufactured benchmark cases: rectangle, disk and annulus.
pub fn manufactured_cases() -> Result<Vec<ManufacturedCase>> {
    [
        ("bubble", DomainSpec::Rectangle { l: 6.0, b: 4.0 }),
        ("polar", DomainSpec::Disk { radius: 6.0 }),
        ("polar", DomainSpec::Annulus { r_in: 0.6, r_out: 6.0 }),
    ]
    .into_iter()
    .map(|(id, d)| make_manufactured(id, ManufacturedSolution::preset(id, &d)?, d, manufactured_context(&d)))
    .collect()
}

pub fn run_suite(suite: Suite, train_cfg: &TrainConfig) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Oracles | Suite::All) {
        out.extend(oracle_checks()?);
    }
    if matches!(suite, Suite::Manufactured | Suite::All) {
        for case in manufactured_cases()? {
            let problem =
                Problem { domain: case.domain, profile: case.profile.clone(), coefficients: &case, admissibility: None };
            let result = train(train_cfg, &problem, None, &TrainOptions::default())?;
            let m = compare_fields(&result.field, &case.solution, &comparison_cloud(&case.domain)?.points)?;
            let name = format!("manufactured_{}_rel_l2", domain_name(&case.domain));
            out.push(Check::at_most(&name, m.rel_l2, MANUFACTURED_GATE));
        }
    }
    Ok(out)
}

fn domain_name(d: &DomainSpec) -> &'static str {
    match d {
        DomainSpec::Rectangle { .. } => "rectangle",
        DomainSpec::Disk { .. } => "disk",
        DomainSpec::Annulus { .. } => "annulus",
    }
}

struct Manufactured<'a>(&'a ManufacturedSolution, &'a MeaContext);

impl CoefficientField for Manufactured<'_> {
    fn coefficients(&self, p: Point) -> PdeCoefficients {
        let mut c = self.1.coefficients(p);
        c.q = 0.0;
        c.q = pde_residual(&self.0.jet(p), &c);
        c
    }
}

fn oracle_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let rect = DomainSpec::Rectangle { l: 6.0, b: 4.0 };
    let ctx = manufactured_context(&rect);

    let quad = ManufacturedSolution::Polynomial { terms: vec![(2, 0, 1.0), (0, 2, 1.0), (1, 1, 0.3), (0, 0, 0.5)] };
    let g = fd_solve_rectangle_with(&Manufactured(&quad, &ctx), 6.0, 4.0, &|p| quad.value(p), 25, 17)?;
    let (pts, vals) = g.nodes();
    let err = pts.iter().zip(&vals).map(|(&p, v)| (v - quad.value(p)).abs()).fold(0.0, f64::max);
    out.push(Check::at_most("fd_quadratic_exactness", err, 1e-9));

    let smooth = ManufacturedSolution::preset("smooth", &rect)?;
    let mut errs = Vec::new();
    for k in 0..4 {
        let g = fd_solve_rectangle_with(&Manufactured(&smooth, &ctx), 6.0, 4.0, &|p| smooth.value(p), 12 * (1 << k) + 1, 8 * (1 << k) + 1)?;
        let (pts, vals) = g.interior_nodes();
        let e2: f64 = pts.iter().zip(&vals).map(|(&p, v)| (v - smooth.value(p)).powi(2)).sum();
        errs.push((e2 / pts.len() as f64).sqrt());
    }
    let worst = errs.windows(2).map(|w| ((w[0] / w[1]).log2() - 2.0).abs()).fold(0.0, f64::max);
    out.push(Check::at_most("fd_second_order_slope_deviation", worst, 0.2));

    for case in manufactured_cases()? {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cloud = sample_interior(&case.domain, 10_000, &mut rng)?;
        let worst = cloud
            .points
            .iter()
            .map(|&p| {
                let c = case.coefficients(p);
                pde_residual(&case.solution.jet(p), &c).abs() / (1.0 + c.q.abs())
            })
            .fold(0.0, f64::max);
        out.push(Check::at_most(&format!("manufactured_residual_{}", domain_name(&case.domain)), worst, 1e-12));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst_lift: f64 = 0.0;
    for trial in 0..20 {
        let k = 1 + trial % 16;
        let series = |rng: &mut ChaCha8Rng| FourierSeries {
            a0: rng.gen_range(-1.0..1.0),
            cos: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            sin: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let (dom, prof) = if trial % 2 == 0 {
            (DomainSpec::Disk { radius: 3.0 }, BoundaryProfile::Disk { series: series(&mut rng) })
        } else {
            (DomainSpec::Annulus { r_in: 0.6, r_out: 3.0 }, BoundaryProfile::Annulus { outer: series(&mut rng), inner: series(&mut rng) })
        };
        let lift = fit_lift(&dom, &prof)?;
        for n in 0..200 {
            let t = TAU * (n as f64 + 0.5) / 200.0;
            for param in [BoundaryParam::outer(t), BoundaryParam::inner(t)] {
                if param.inner && !matches!(dom, DomainSpec::Annulus { .. }) {
                    continue;
                }
                let b = boundary_height(&dom, &prof, param);
                let scale = 1.0 + prof.enrichment_series().map_or(0.0, |s| s.max_abs_coefficient());
                worst_lift = worst_lift.max((lift.value(dom.boundary_point(param))? - b).abs() / scale);
            }
        }
    }
    out.push(Check::at_most("lift_boundary_reproduction", worst_lift, 1e-10));

    let LiftSpec::AnnulusFourier { a0, b0, .. } =
        fit_annulus_lift(&FourierSeries::constant(1.0), &FourierSeries::constant(0.0), 0.6, 6.0)?
    else {
        return Err(MeaError::Config("annulus lift expected".into()));
    };
    let dev = (a0 - (1.0 - 6f64.ln() / 10f64.ln())).abs().max((b0 - 1.0 / 10f64.ln()).abs());
    out.push(Check::at_most("annulus_k0_example", dev, 1e-9));

    let mut worst_jet: f64 = 0.0;
    for seed in 0..10 {
        let dom = DomainSpec::Disk { radius: 2.0 };
        let mut net = init_mlp(2, 12, InputNormalization::for_domain(&dom), seed)?;
        for t in net.theta_mut() {
            *t += rng.gen_range(-0.3..0.3);
        }
        for p in sample_interior(&dom, 10, &mut rng)?.points {
            let j = net.jet(p)?;
            let h = 1e-5;
            let at = |dx: f64, dy: f64| net.jet(Point::new(p.x1 + dx, p.x2 + dy));
            let (xp, xm, yp, ym) = (at(h, 0.0)?, at(-h, 0.0)?, at(0.0, h)?, at(0.0, -h)?);
            let fd = [
                j.f,
                (xp.f - xm.f) / (2.0 * h),
                (yp.f - ym.f) / (2.0 * h),
                (xp.f1 - xm.f1) / (2.0 * h),
                (yp.f1 - ym.f1) / (2.0 * h),
                (yp.f2 - ym.f2) / (2.0 * h),
            ];
            let arr = j.to_array();
            let norm = arr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in arr.iter().zip(fd) {
                worst_jet = worst_jet.max((a - b).abs() / (a.abs() + 1e-2 * norm));
            }
        }
    }
    out.push(Check::at_most("network_jets_vs_finite_differences", worst_jet, 1e-4));

    let mut disagreements = 0usize;
    let mut worst_eig: f64 = 0.0;
    for _ in 0..10_000 {
        let (s11, s22, s12) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let ps = principal_stresses(s11, s22, s12);
        for state in [StressState::Compression, StressState::Tension] {
            let by_eig = match state {
                StressState::Compression => ps.sigma1 <= 0.0,
                StressState::Tension => ps.sigma2 >= 0.0,
            };
            if by_eig != tensor_admissible(state, s11, s22, s12) || by_eig != (admissibility_margin(state, s11, s22, s12) >= 0.0) {
                disagreements += 1;
            }
        }
        for (sig, e) in [(ps.sigma1, ps.e1), (ps.sigma2, ps.e2)] {
            let r = (s11 * e[0] + s12 * e[1] - sig * e[0]).abs().max((s12 * e[0] + s22 * e[1] - sig * e[1]).abs());
            worst_eig = worst_eig.max(r / (s11.abs() + s22.abs() + s12.abs()));
        }
    }
    out.push(Check::at_most("admissibility_disagreements", disagreements as f64, 0.0));
    out.push(Check::at_most("principal_eigen_identity", worst_eig, 1e-12));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_passes() {
        let checks = run_suite(Suite::Oracles, &desk_config(Formulation::Hard)).unwrap();
        assert!(checks.len() >= 10);
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn starved_manufactured_run_fails_its_gate() {
        let cfg = TrainConfig { adam_epochs: 2, n_pde: 64, n_val: 64, audit_points: 100, validate_every: 1, ..desk_config(Formulation::Hard) };
        let checks = run_suite(Suite::Manufactured, &cfg).unwrap();
        assert_eq!(checks.len(), 3);
        assert!(checks.iter().all(|c| !c.passed));
        assert!("nope".parse::<Suite>().is_err());
    }
}
