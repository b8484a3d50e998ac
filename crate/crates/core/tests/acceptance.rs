//! Acceptance battery. Prints one PASS/FAIL/SKIP line per check and exits non-zero
//! if any check fails.
//!
//! Desk-scale training runs are part of the default run. Full-budget variants are
//! skipped unless the binary is given `--ignored` or `--include-ignored`, e.g.
//! `cargo test --release -p mea-core --test acceptance -- --ignored`. With `--quick`
//! only the checks that need no training run.

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;

use mea_core::config::RunConfig;
use mea_core::geometry::{DomainSpec, FourierSeries, Point};
use mea_core::hard_bc::{fit_annulus_lift, fit_disk_lift, LiftSpec};
use mea_core::mea::{tensor_admissible, StressState};
use mea_core::network::{init_mlp, InputNormalization, JetOrder, MlpParams};
use mea_core::reference::ManufacturedCase;
use mea_core::residual::{Jet, SurfaceField};
use mea_core::run::{solve, SolveOutcome};
use mea_core::trainer::{
    adam_step, lbfgs_step, train, AdamState, Formulation, LbfgsConfig, LbfgsState, Problem, TrainConfig, TrainOptions,
    TrainResult, TrainStatus,
};
use mea_core::verify::{desk_config, manufactured_cases};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Default)]
struct Tally {
    failed: usize,
}

impl Tally {
    fn check(&mut self, id: &str, name: &str, value: f64, tolerance: f64) -> bool {
        let ok = value <= tolerance;
        println!("{} {id} {name}: {value:.4e} (tolerance {tolerance:.1e})", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
        ok
    }

    fn flag(&mut self, id: &str, name: &str, ok: bool, detail: &str) {
        println!("{} {id} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }

    fn skip(&self, id: &str, name: &str) {
        println!("SKIP {id} {name}: full budget, run with --ignored");
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let full = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let mut t = Tally::default();

    autodiff(&mut t);
    optimizers(&mut t);
    lifts(&mut t);
    admissibility(&mut t);
    if args.iter().any(|a| a == "--quick") {
        println!("SKIP C1-C5, C10 training runs: --quick");
    } else {
        manufactured_desk(&mut t);
        rectangle_desk(&mut t);
    }
    if full {
        full_budget(&mut t);
    } else {
        t.skip("C1", "manufactured full budget rel L2 <= 0.05%");
        t.skip("C4", "rectangle full budget validation PDE-RMSE <= 1.74e-2");
        t.skip("C5", "full budget disk and annulus hard < soft");
    }

    println!("acceptance: {} failure(s)", t.failed);
    if t.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- closed forms

/// Exact surfaces of the three manufactured cases, differentiated by hand.
fn exact_value(domain: &DomainSpec, p: Point) -> f64 {
    let (x, y) = (p.x1, p.x2);
    match *domain {
        DomainSpec::Rectangle { l, b } => 0.5 * (1.0 + (TAU * x / l).cos()) + 0.5 * (PI * x / l).cos() * (PI * y / b).cos(),
        DomainSpec::Disk { radius } => {
            let (r, th) = (x.hypot(y), y.atan2(x));
            1.0 - (r / radius).powi(2) + 0.1 * (r / radius).powi(4) * (4.0 * th).cos()
        }
        DomainSpec::Annulus { r_out, .. } => {
            let (r, th) = (x.hypot(y), y.atan2(x));
            1.0 + (r / r_out).powi(2) - 0.2 * (r / r_out).powi(3) * (3.0 * th).cos()
        }
    }
}

fn random_interior(domain: &DomainSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = match *domain {
            DomainSpec::Rectangle { l, b } => Point::new(rng.gen_range(-0.5 * l..0.5 * l), rng.gen_range(-0.5 * b..0.5 * b)),
            DomainSpec::Disk { radius: r } | DomainSpec::Annulus { r_out: r, .. } => Point::new(rng.gen_range(-r..r), rng.gen_range(-r..r)),
        };
        let r = p.x1.hypot(p.x2);
        let inside = match *domain {
            DomainSpec::Rectangle { .. } => true,
            DomainSpec::Disk { radius } => r < radius,
            DomainSpec::Annulus { r_in, r_out } => r > r_in && r < r_out,
        };
        if inside {
            out.push(p);
        }
    }
    out
}

fn random_boundary(domain: &DomainSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..n)
        .map(|_| match *domain {
            DomainSpec::Rectangle { l, b } => {
                let s = rng.gen_range(-0.5..0.5);
                match rng.gen_range(0..4) {
                    0 => Point::new(s * l, -0.5 * b),
                    1 => Point::new(s * l, 0.5 * b),
                    2 => Point::new(-0.5 * l, s * b),
                    _ => Point::new(0.5 * l, s * b),
                }
            }
            DomainSpec::Disk { radius } => {
                let th: f64 = rng.gen_range(0.0..TAU);
                Point::new(radius * th.cos(), radius * th.sin())
            }
            DomainSpec::Annulus { r_in, r_out } => {
                let th: f64 = rng.gen_range(0.0..TAU);
                let r = if rng.gen_bool(0.5) { r_in } else { r_out };
                Point::new(r * th.cos(), r * th.sin())
            }
        })
        .collect()
}

fn rel_l2(candidate: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = candidate.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn domain_name(d: &DomainSpec) -> &'static str {
    match d {
        DomainSpec::Rectangle { .. } => "rectangle",
        DomainSpec::Disk { .. } => "disk",
        DomainSpec::Annulus { .. } => "annulus",
    }
}

// ---------------------------------------------------------------- C6

fn autodiff(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let h = 1e-3;
    let mut worst_jet: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for seed in 0..100 {
        let dom = DomainSpec::Rectangle { l: 6.0, b: 4.0 };
        let mut net = init_mlp(rng.gen_range(1..=3), rng.gen_range(4..=16), InputNormalization::for_domain(&dom), seed).unwrap();
        let theta: Vec<f64> = net.theta().iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
        net.set_theta(&theta);
        let pts = random_interior(&dom, 100, &mut rng);
        let jets = net.forward_batch(&pts, JetOrder::Second).unwrap().output_jets();
        let f = |x: f64, y: f64| net.value(Point::new(x, y)).unwrap();
        for (p, j) in pts.iter().zip(&jets) {
            let (x, y) = (p.x1, p.x2);
            let f0 = f(x, y);
            let fd = [
                f0,
                (f(x + h, y) - f(x - h, y)) / (2.0 * h),
                (f(x, y + h) - f(x, y - h)) / (2.0 * h),
                (f(x + h, y) - 2.0 * f0 + f(x - h, y)) / (h * h),
                (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h),
                (f(x, y + h) - 2.0 * f0 + f(x, y - h)) / (h * h),
            ];
            let a = j.to_array();
            let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (u, v) in a.iter().zip(fd) {
                worst_jet = worst_jet.max((u - v).abs() / (u.abs().max(v.abs()) + 1e-3 * scale));
            }
        }

        // directional derivative of a loss over all six jet entries
        let w: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let loss_of = |net: &MlpParams| -> f64 {
            let jets = net.forward_batch(&pts, JetOrder::Second).unwrap().output_jets();
            jets.iter().map(|j| j.to_array().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum::<f64>() / pts.len() as f64
        };
        let (_, grad) = net
            .param_gradient(&pts, |jets| {
                let n = jets.len() as f64;
                let mut adj = Vec::with_capacity(jets.len());
                let mut total = 0.0;
                for j in jets {
                    let s: f64 = j.to_array().iter().zip(&w).map(|(a, b)| a * b).sum();
                    total += s * s;
                    adj.push(Jet::from_array(std::array::from_fn(|k| 2.0 * s * w[k] / n)));
                }
                (total / n, adj)
            })
            .unwrap();
        let mut v: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let eps = 1e-5;
        let shifted = |s: f64| {
            let mut n2 = net.clone();
            let th: Vec<f64> = theta.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            n2.set_theta(&th);
            loss_of(&n2)
        };
        let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let an: f64 = grad.iter().zip(&v).map(|(a, b)| a * b).sum();
        let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_grad = worst_grad.max((fd - an).abs() / (an.abs().max(1e-3 * gnorm)));
    }
    t.check("C6", "network jets vs finite differences (100 nets x 100 points)", worst_jet, 1e-4);
    t.check("C6", "parameter gradient vs directional differences", worst_grad, 1e-5);
}

// ---------------------------------------------------------------- C7

fn spd_quadratic(d: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let a: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let xstar: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (a, xstar)
}

fn optimizers(t: &mut Tally) {
    // L-BFGS on 1/2 (x - x*)^T A (x - x*)
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (a, xstar) = spd_quadratic(d, &mut rng);
    let eval = |x: &[f64]| -> mea_core::Result<(f64, Vec<f64>)> {
        let e: Vec<f64> = x.iter().zip(&xstar).map(|(u, v)| u - v).collect();
        let g: Vec<f64> = a.iter().map(|row| row.iter().zip(&e).map(|(p, q)| p * q).sum()).collect();
        Ok((0.5 * e.iter().zip(&g).map(|(p, q)| p * q).sum::<f64>(), g))
    };
    let cfg = LbfgsConfig { history: d, c2: 1e-6, ..Default::default() };
    let mut x = vec![0.0; d];
    let mut st = LbfgsState::default();
    let (mut f, mut g) = eval(&x).unwrap();
    let mut iters = 0;
    while iters < d + 2 && g.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-12 {
        let (f2, g2, _) = lbfgs_step(&cfg, &mut st, &mut x, f, &g, eval).unwrap();
        f = f2;
        g = g2;
        iters += 1;
    }
    let err = x.iter().zip(&xstar).map(|(u, v)| (u - v).abs() / (1.0 + v.abs())).fold(0.0, f64::max);
    t.check("C7", &format!("L-BFGS quadratic minimizer after {iters} <= d+2 iterations"), err, 1e-10);

    // strong Wolfe on every accepted step, recomputed from the objective
    let rosen = |x: &[f64]| -> mea_core::Result<(f64, Vec<f64>)> {
        let (u, v) = (x[0], x[1]);
        Ok((
            (1.0 - u).powi(2) + 100.0 * (v - u * u).powi(2),
            vec![-2.0 * (1.0 - u) - 400.0 * u * (v - u * u), 200.0 * (v - u * u)],
        ))
    };
    let cfg = LbfgsConfig::default();
    let mut x = vec![-1.2, 1.0];
    let mut st = LbfgsState::default();
    let (mut f, mut g) = rosen(&x).unwrap();
    let (mut steps, mut violations) = (0, 0);
    for _ in 0..200 {
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-10 {
            break;
        }
        let x0 = x.clone();
        let (f2, g2, rep) = lbfgs_step(&cfg, &mut st, &mut x, f, &g, rosen).unwrap();
        let s: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let (fx, gx) = rosen(&x).unwrap();
        let dg0: f64 = g.iter().zip(&s).map(|(a, b)| a * b).sum();
        let dg1: f64 = gx.iter().zip(&s).map(|(a, b)| a * b).sum();
        let armijo = fx <= f + cfg.c1 * dg0 + 1e-14 * f.abs();
        let curvature = dg1.abs() <= cfg.c2 * dg0.abs();
        if rep.fallback || !armijo || !curvature {
            violations += 1;
        }
        steps += 1;
        f = f2;
        g = g2;
    }
    t.flag("C7", "strong Wolfe conditions on every accepted step", violations == 0, &format!("{violations} violation(s) in {steps} steps"));
    t.check("C7", "L-BFGS Rosenbrock distance to (1, 1)", (x[0] - 1.0).abs().max((x[1] - 1.0).abs()), 1e-8);

    // Adam on the scalar bowl 1/2 theta^2, against the plain recursion
    let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
    let (mut m, mut v, mut oracle) = (0.0f64, 0.0f64, 1.0f64);
    let mut st = AdamState::new(1);
    let mut theta = [1.0];
    let mut gap: f64 = 0.0;
    for k in 1..=10_000 {
        let g = oracle;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        oracle -= lr * (m / (1.0 - b1.powi(k))) / ((v / (1.0 - b2.powi(k))).sqrt() + eps);
        let grad = [theta[0]];
        adam_step(&mut st, &mut theta, &grad, lr).unwrap();
        gap = gap.max((theta[0] - oracle).abs());
    }
    t.check("C7", "Adam trajectory vs scalar recursion", gap, 1e-12);
    t.check("C7", "Adam bowl |theta| after 1e4 steps", theta[0].abs(), 1e-2);
}

// ---------------------------------------------------------------- C8

fn lifts(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (r_in, r_out) = (0.6, 6.0);
    let h = 1e-2;
    let (mut worst_bc, mut worst_lap): (f64, f64) = (0.0, 0.0);
    // five-point Laplacian extrapolated over h and h/2
    let lap = |g: &dyn Fn(Point) -> f64, p: Point| {
        let at = |h: f64| {
            (g(Point::new(p.x1 + h, p.x2)) + g(Point::new(p.x1 - h, p.x2)) + g(Point::new(p.x1, p.x2 + h)) + g(Point::new(p.x1, p.x2 - h))
                - 4.0 * g(p))
                / (h * h)
        };
        (4.0 * at(0.5 * h) - at(h)) / 3.0
    };
    for trial in 0..20 {
        let k = 1 + trial % 16;
        let mut series = || FourierSeries {
            a0: rng.gen_range(-1.0..1.0),
            cos: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            sin: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let (outer, inner) = (series(), series());
        let eval = |s: &FourierSeries, th: f64| {
            s.a0 + (1..=k).map(|j| s.cos[j - 1] * (j as f64 * th).cos() + s.sin[j - 1] * (j as f64 * th).sin()).sum::<f64>()
        };
        let disk = fit_disk_lift(&outer, r_out).unwrap();
        let ann = fit_annulus_lift(&outer, &inner, r_in, r_out).unwrap();
        let gmax = (0..720).map(|i| eval(&outer, TAU * i as f64 / 720.0).abs()).fold(0.0, f64::max);
        for i in 0..720 {
            let th = TAU * (i as f64 + 0.3) / 720.0;
            let (s, c) = th.sin_cos();
            let scale = 1.0 + gmax;
            worst_bc = worst_bc.max((disk.value(Point::new(r_out * c, r_out * s)).unwrap() - eval(&outer, th)).abs() / scale);
            worst_bc = worst_bc.max((ann.value(Point::new(r_out * c, r_out * s)).unwrap() - eval(&outer, th)).abs() / scale);
            worst_bc = worst_bc.max((ann.value(Point::new(r_in * c, r_in * s)).unwrap() - eval(&inner, th)).abs() / scale);
        }
        for (lift, dom) in [(&disk, DomainSpec::Disk { radius: r_out }), (&ann, DomainSpec::Annulus { r_in, r_out })] {
            let g = |q: Point| lift.value(q).unwrap();
            let pts: Vec<Point> = random_interior(&dom, 100, &mut rng)
                .into_iter()
                .filter(|p| {
                    let r = p.x1.hypot(p.x2);
                    r < r_out - 2.0 * h && (matches!(dom, DomainSpec::Disk { .. }) || r > r_in + 2.0 * h)
                })
                .collect();
            let gnorm = pts.iter().map(|&p| g(p).abs()).fold(gmax, f64::max);
            for p in pts {
                worst_lap = worst_lap.max(lap(&g, p).abs() / gnorm);
            }
        }
    }
    t.check("C8", "lift boundary reproduction, random K <= 16 (relative)", worst_bc, 1e-10);
    t.check("C8", "lift stencil Laplacian / max|G|", worst_lap, 1e-6);

    let lift = fit_annulus_lift(&FourierSeries::constant(1.0), &FourierSeries::constant(0.0), r_in, r_out).unwrap();
    let LiftSpec::AnnulusFourier { a0, b0, .. } = lift.clone() else {
        t.flag("C8", "annulus k=0 example", false, "unexpected lift kind");
        return;
    };
    let b0_exact = 1.0 / (r_out / r_in).ln();
    let a0_exact = 1.0 - b0_exact * r_out.ln();
    t.check("C8", "annulus k=0 coefficients A0 ~ 0.221849, B0 ~ 0.434294", (a0 - a0_exact).abs().max((b0 - b0_exact).abs()), 1e-9);
    let ends = lift.value(Point::new(r_in, 0.0)).unwrap().abs().max((lift.value(Point::new(0.0, r_out)).unwrap() - 1.0).abs());
    t.check("C8", "annulus k=0 lift G(R_in) = 0, G(R_out) = 1", ends, 1e-12);
}

// ---------------------------------------------------------------- C9

fn admissibility(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut disagreements = 0;
    for _ in 0..10_000 {
        let (s11, s22, s12): (f64, f64, f64) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let mean = 0.5 * (s11 + s22);
        let rad = (0.25 * (s11 - s22).powi(2) + s12 * s12).sqrt();
        let (hi, lo) = (mean + rad, mean - rad);
        for (state, by_eig) in [(StressState::Compression, hi <= 0.0), (StressState::Tension, lo >= 0.0)] {
            if tensor_admissible(state, s11, s22, s12) != by_eig {
                disagreements += 1;
            }
        }
    }
    t.check("C9", "admissibility verdicts vs eigenvalue signs (1e4 tensors)", disagreements as f64, 0.0);
}

// ---------------------------------------------------------------- C1, C3, C4

fn train_case(case: &ManufacturedCase, cfg: &TrainConfig) -> TrainResult {
    let problem = Problem { domain: case.domain, profile: case.profile.clone(), coefficients: case, admissibility: None };
    train(cfg, &problem, None, &TrainOptions::default()).expect("training runs")
}

fn val_train_ratio(r: &TrainResult) -> f64 {
    let last = r.history.iter().rev().find(|h| h.pde_rmse_val.is_some()).expect("validated epoch");
    let (v, tr) = (last.pde_rmse_val.unwrap(), last.pde_rmse_train);
    (v / tr).max(tr / v)
}

fn boundary_checks(t: &mut Tally, label: &str, r: &TrainResult, domain: &DomainSpec, exact: &dyn Fn(Point) -> f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let pts = random_boundary(domain, 10_000, &mut rng);
    let b: Vec<f64> = pts.iter().map(|&p| exact(p)).collect();
    let tol = 1e-10 * (1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let f = r.field.values(&pts).unwrap();
    let direct = f.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    t.check("C3", &format!("{label} certified max |f - b| over all epochs"), r.boundary_bound_max.unwrap_or(f64::INFINITY), tol);
    t.check("C3", &format!("{label} final max |f - b| on 1e4 fresh boundary samples"), direct, tol);
}

fn manufactured_desk(t: &mut Tally) {
    let cfg = desk_config(Formulation::Hard);
    for case in manufactured_cases().expect("manufactured cases") {
        let name = domain_name(&case.domain);
        let r = train_case(&case, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let pts = random_interior(&case.domain, 10_000, &mut rng);
        let exact: Vec<f64> = pts.iter().map(|&p| exact_value(&case.domain, p)).collect();
        let got = r.field.values(&pts).unwrap();
        t.check("C1", &format!("{name} hard desk rel L2 vs f* (%)"), 100.0 * rel_l2(&got, &exact), 0.5);
        let dom = case.domain;
        boundary_checks(t, name, &r, &dom, &|p| exact_value(&dom, p));
        t.check("C4", &format!("{name} hard desk validation/training PDE-RMSE factor"), val_train_ratio(&r), 2.0);
    }
}

// ---------------------------------------------------------------- C2, C4, C5, C10

const RECTANGLE: &str = r#"
[case]
name = "rectangle"
domain = { kind = "rectangle", l = 6.0, b = 4.0 }
profile = { kind = "arch", h_arch = 1.0 }

[airy]
l1 = 2.0
l2 = 0.0
l3 = 2.0
state = "compression"

[loads]
rho = 18.0
thickness = 0.1
alpha_h = 0.5
theta_h = "diagonal"
point_loads = [{ magnitude = 5.0, center = { x1 = -1.5, x2 = 0.0 }, sigma = 0.5 }]

[outputs]
grid = [31, 21]
principal = false

[reference]
kind = "fd"
nx = 129
ny = 81
"#;

fn rectangle_run(train: &TrainConfig, dir: &std::path::Path) -> SolveOutcome {
    let mut cfg = RunConfig::from_toml_str(RECTANGLE).expect("rectangle config");
    cfg.train = train.clone();
    cfg.train.record_wallclock = false;
    let text = cfg.to_toml_string().unwrap();
    solve(&cfg, &text, dir).expect("rectangle run")
}

fn rel_percent(o: &SolveOutcome) -> f64 {
    o.metrics.as_ref().map_or(f64::INFINITY, |m| m.rel_l2_percent())
}

fn rectangle_desk(t: &mut Tally) {
    let tmp = tempfile::tempdir().unwrap();
    let arch = |p: Point| 0.5 * (1.0 + (TAU * p.x1 / 6.0).cos());

    let hard = rectangle_run(&desk_config(Formulation::Hard), &tmp.path().join("hard"));
    let hard_pct = rel_percent(&hard);
    t.check("C2", "rectangle hard desk rel L2 vs 129x81 FD (%)", hard_pct, 0.3);
    boundary_checks(t, "rectangle", &hard.result, &DomainSpec::Rectangle { l: 6.0, b: 4.0 }, &arch);
    t.check("C4", "rectangle hard desk validation/training PDE-RMSE factor", val_train_ratio(&hard.result), 2.0);

    let soft = rectangle_run(&desk_config(Formulation::Soft), &tmp.path().join("soft"));
    let soft_pct = rel_percent(&soft);
    t.flag("C2", "rectangle soft desk run completes", soft.result.status == TrainStatus::Completed, &format!("{:?}", soft.result.status));
    t.check("C2", "rectangle soft desk rel L2 vs 129x81 FD (%)", soft_pct, 1.2);
    t.check("C4", "rectangle soft desk validation/training PDE-RMSE factor", val_train_ratio(&soft.result), 2.0);
    t.flag("C5", "rectangle desk ordering hard < soft", hard_pct < soft_pct, &format!("{hard_pct:.4}% vs {soft_pct:.4}%"));

    let again = rectangle_run(&desk_config(Formulation::Hard), &tmp.path().join("again"));
    let (a, b) = (std::fs::read(tmp.path().join("hard/log.csv")).unwrap(), std::fs::read(tmp.path().join("again/log.csv")).unwrap());
    let same_field = again.result.field == hard.result.field;
    t.flag("C10", "identical seeds give byte-identical logs", a == b && same_field, &format!("{} vs {} bytes, fields equal: {same_field}", a.len(), b.len()));
}

// ---------------------------------------------------------------- full budget

fn full_budget(t: &mut Tally) {
    let hard = TrainConfig::full_budget(Formulation::Hard);
    let soft = TrainConfig::full_budget(Formulation::Soft);
    for case in manufactured_cases().expect("manufactured cases") {
        let name = domain_name(&case.domain);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let pts = random_interior(&case.domain, 10_000, &mut rng);
        let exact: Vec<f64> = pts.iter().map(|&p| exact_value(&case.domain, p)).collect();
        let h = 100.0 * rel_l2(&train_case(&case, &hard).field.values(&pts).unwrap(), &exact);
        t.check("C1", &format!("{name} hard full budget rel L2 vs f* (%)"), h, 0.05);
        if !matches!(case.domain, DomainSpec::Rectangle { .. }) {
            let s = 100.0 * rel_l2(&train_case(&case, &soft).field.values(&pts).unwrap(), &exact);
            t.flag("C5", &format!("{name} full budget ordering hard < soft"), h < s, &format!("{h:.4}% vs {s:.4}%"));
        }
    }
    let tmp = tempfile::tempdir().unwrap();
    let run = rectangle_run(&hard, tmp.path());
    let val = run.report.final_val_pde_rmse.unwrap_or(f64::INFINITY);
    t.check("C4", "rectangle hard full budget validation PDE-RMSE", val, 2.0 * 8.7e-3);
    t.check("C4", "rectangle hard full budget validation/training PDE-RMSE factor", val_train_ratio(&run.result), 2.0);
}
