//! Loss assembly over cached collocation data.

use crate::error::{MeaError, Result};
use crate::geometry::{boundary_height, BoundaryProfile, DomainSpec, Point, PointCloud};
use crate::hard_bc::{compose, compose_adjoint, distance_eval, LiftSpec};
use crate::network::{pack_jets, JetOrder, MlpParams};
use crate::residual::{pairwise_sum, pde_residual, CoefficientField, Jet, PdeCoefficients, SurfaceField};

use super::Formulation;

/// Mean squared PDE residual and mean squared boundary mismatch.
pub fn soft_losses(
    field: &dyn SurfaceField,
    ctx: &dyn CoefficientField,
    domain: &DomainSpec,
    profile: &BoundaryProfile,
    interior: &PointCloud,
    boundary: &PointCloud,
) -> Result<(f64, f64)> {
    if interior.is_empty() || boundary.is_empty() {
        return Err(MeaError::EmptyCloud);
    }
    let jets = field.jets(&interior.points)?;
    let r2: Vec<f64> = interior
        .points
        .iter()
        .zip(&jets)
        .map(|(&p, j)| pde_residual(j, &ctx.coefficients(p)).powi(2))
        .collect();
    let vals = field.values(&boundary.points)?;
    let e2: Vec<f64> = vals
        .iter()
        .zip(&boundary.params)
        .map(|(f, &t)| (f - boundary_height(domain, profile, t)).powi(2))
        .collect();
    Ok((pairwise_sum(&r2) / r2.len() as f64, pairwise_sum(&e2) / e2.len() as f64))
}

/// Interior points with their coefficients, plus distance and lift jets for the hard ansatz.
pub(crate) struct InteriorSet {
    pub points: Vec<Point>,
    coeffs: Vec<PdeCoefficients>,
    dist: Vec<Jet>,
    lift: Vec<Jet>,
}

impl InteriorSet {
    pub fn new(points: Vec<Point>, ctx: &dyn CoefficientField, domain: &DomainSpec, lift: Option<&LiftSpec>) -> Result<Self> {
        if points.is_empty() {
            return Err(MeaError::EmptyCloud);
        }
        let coeffs = points.iter().map(|&p| ctx.coefficients(p)).collect();
        let (dist, lift) = match lift {
            Some(l) => (
                points.iter().map(|&p| distance_eval(domain, p)).collect(),
                points.iter().map(|&p| l.jet(p)).collect::<Result<_>>()?,
            ),
            None => (Vec::new(), Vec::new()),
        };
        Ok(Self { points, coeffs, dist, lift })
    }

    fn is_hard(&self) -> bool {
        !self.dist.is_empty()
    }

    fn field_jet(&self, i: usize, n: &Jet) -> Jet {
        if self.is_hard() {
            compose(&self.dist[i], n, &self.lift[i])
        } else {
            *n
        }
    }

    /// Residuals at the current parameters, with the tape when a gradient will follow.
    fn residuals(&self, net: &MlpParams) -> Result<(Vec<f64>, crate::network::Tape)> {
        let tape = net.forward_batch(&self.points, JetOrder::Second)?;
        let r = (0..self.points.len()).map(|i| pde_residual(&self.field_jet(i, &tape.output_jet(i)), &self.coeffs[i])).collect();
        Ok((r, tape))
    }

    pub fn loss(&self, net: &MlpParams) -> Result<f64> {
        let (r, _) = self.residuals(net)?;
        Ok(mean_square(&r))
    }
}

pub(crate) struct BoundarySet {
    points: Vec<Point>,
    targets: Vec<f64>,
}

impl BoundarySet {
    pub fn new(cloud: &PointCloud, domain: &DomainSpec, profile: &BoundaryProfile) -> Result<Self> {
        if cloud.is_empty() {
            return Err(MeaError::EmptyCloud);
        }
        let targets = cloud.params.iter().map(|&t| boundary_height(domain, profile, t)).collect();
        Ok(Self { points: cloud.points.clone(), targets })
    }
}

fn mean_square(v: &[f64]) -> f64 {
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    pairwise_sum(&sq) / sq.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Evaluation {
    pub l_pde: f64,
    pub l_bc: Option<f64>,
    pub w_pde: f64,
    pub w_bc: Option<f64>,
    pub total: f64,
}

/// Evaluates both loss terms, lets `weigh` choose the term weights from them, and
/// accumulates the gradient of the weighted total.
pub(crate) fn evaluate<W>(
    net: &MlpParams,
    formulation: Formulation,
    interior: &InteriorSet,
    boundary: Option<&BoundarySet>,
    weigh: W,
) -> Result<(Evaluation, Vec<f64>)>
where
    W: FnOnce(f64, Option<f64>) -> Result<(f64, Option<f64>)>,
{
    let (r, tape) = interior.residuals(net)?;
    let l_pde = mean_square(&r);
    let bc = match (formulation, boundary) {
        (Formulation::Soft, Some(b)) => {
            let tape_b = net.forward_batch(&b.points, JetOrder::Value)?;
            let e: Vec<f64> = tape_b.output.iter().zip(&b.targets).map(|(n, t)| n - t).collect();
            Some((mean_square(&e), e, tape_b))
        }
        (Formulation::Soft, None) => return Err(MeaError::EmptyCloud),
        (Formulation::Hard, _) => None,
    };
    let l_bc = bc.as_ref().map(|b| b.0);
    let (w_pde, w_bc) = weigh(l_pde, l_bc)?;
    let total = w_pde * l_pde + w_bc.zip(l_bc).map_or(0.0, |(w, l)| w * l);
    if !total.is_finite() {
        return Err(MeaError::Divergence("non-finite training loss".into()));
    }

    let n = r.len();
    let scale = 2.0 * w_pde / n as f64;
    let adj: Vec<Jet> = (0..n)
        .map(|i| {
            let slope = interior.coeffs[i].residual_slope();
            let fbar = Jet::from_array(slope.map(|s| s * scale * r[i]));
            if interior.is_hard() {
                compose_adjoint(&interior.dist[i], &fbar)
            } else {
                fbar
            }
        })
        .collect();
    let mut grad = vec![0.0; net.len()];
    net.backward_into(&tape, &pack_jets(&adj), &mut grad)?;
    if let (Some((_, e, tape_b)), Some(w)) = (bc, w_bc) {
        let s = 2.0 * w / e.len() as f64;
        let adj_b: Vec<f64> = e.iter().map(|v| s * v).collect();
        net.backward_into(&tape_b, &adj_b, &mut grad)?;
    }
    Ok((Evaluation { l_pde, l_bc, w_pde, w_bc, total }, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_mlp, InputNormalization};
    use crate::residual::SurfaceField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixed(PdeCoefficients);

    impl CoefficientField for Fixed {
        fn coefficients(&self, _: Point) -> PdeCoefficients {
            self.0
        }
    }

    struct ZeroField;

    impl SurfaceField for ZeroField {
        fn jet(&self, _: Point) -> Result<Jet> {
            Ok(Jet::default())
        }
    }

    #[test]
    fn constant_losses() {
        let dom = DomainSpec::Disk { radius: 6.0 };
        let prof = BoundaryProfile::Disk { series: crate::geometry::FourierSeries::constant(2.0) };
        let ctx = Fixed(PdeCoefficients { s11: -1.0, s22: -1.0, s12: 0.0, p1: 0.0, p2: 0.0, q: 1.8 });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let int = crate::geometry::sample_interior(&dom, 50, &mut rng).unwrap();
        let bnd = crate::geometry::sample_boundary_uniform(&dom, 20, &mut rng).unwrap();
        let (lp, lb) = soft_losses(&ZeroField, &ctx, &dom, &prof, &int, &bnd).unwrap();
        assert!((lp - 3.24).abs() < 1e-14 && (lb - 4.0).abs() < 1e-14);
        assert!(soft_losses(&ZeroField, &ctx, &dom, &prof, &PointCloud::interior(vec![]), &bnd).is_err());
    }

    fn setup(form: Formulation) -> (MlpParams, InteriorSet, Option<BoundarySet>) {
        let dom = DomainSpec::Annulus { r_in: 0.6, r_out: 6.0 };
        let prof = BoundaryProfile::three_leg_demo();
        let lift = crate::hard_bc::fit_lift(&dom, &prof).unwrap();
        let ctx = Fixed(PdeCoefficients { s11: -2.0, s22: -1.5, s12: 0.3, p1: 0.2, p2: -0.4, q: 1.1 });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = init_mlp(2, 8, InputNormalization::for_domain(&dom), 5).unwrap();
        for t in net.theta_mut() {
            *t += rng.gen_range(-0.2..0.2);
        }
        let int = crate::geometry::sample_interior(&dom, 40, &mut rng).unwrap();
        let bnd = crate::geometry::sample_boundary_uniform(&dom, 15, &mut rng).unwrap();
        let lift = (form == Formulation::Hard).then_some(&lift);
        let iset = InteriorSet::new(int.points, &ctx, &dom, lift).unwrap();
        let bset = (form == Formulation::Soft).then(|| BoundarySet::new(&bnd, &dom, &prof).unwrap());
        (net, iset, bset)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for form in [Formulation::Soft, Formulation::Hard] {
            let (net, iset, bset) = setup(form);
            let w = |_: f64, lb: Option<f64>| Ok((0.7, lb.map(|_| 1.9)));
            let (ev, grad) = evaluate(&net, form, &iset, bset.as_ref(), w).unwrap();
            assert_eq!(ev.l_bc.is_some(), form == Formulation::Soft);
            let expect = 0.7 * ev.l_pde + ev.l_bc.map_or(0.0, |l| 1.9 * l);
            assert!((ev.total - expect).abs() <= 1e-14 * expect);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..20 {
                let k = rng.gen_range(0..net.len());
                let h = 1e-6;
                let f = |d: f64| {
                    let mut n2 = net.clone();
                    n2.theta_mut()[k] += d;
                    evaluate(&n2, form, &iset, bset.as_ref(), w).unwrap().0.total
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                assert!((fd - grad[k]).abs() <= 1e-5 * grad[k].abs().max(1e-3 * ev.total), "{form:?} {k}: {fd} {}", grad[k]);
            }
        }
    }
}
