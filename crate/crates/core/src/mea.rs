//! Airy stress parameterization, loads and projected stresses.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{sample_boundary_uniform, sample_interior, DomainSpec, Point};
use crate::residual::PdeCoefficients;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressState {
    Compression,
    Tension,
}

impl StressState {
    pub fn sign(self) -> f64 {
        match self {
            StressState::Compression => -1.0,
            StressState::Tension => 1.0,
        }
    }
}

/// Constant membrane stresses `(N11, N22, N12)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressComponents {
    pub n11: f64,
    pub n22: f64,
    pub n12: f64,
}

/// Quadratic Airy stress function with constant Hessian built from `(l1, l2, l3)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AiryField {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub state: StressState,
    #[serde(default = "origin")]
    pub centroid: Point,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
}

fn origin() -> Point {
    Point::new(0.0, 0.0)
}

impl AiryField {
    pub fn new(l1: f64, l2: f64, l3: f64, state: StressState) -> Self {
        Self { l1, l2, l3, state, centroid: origin(), c0: 0.0, c1: 0.0, c2: 0.0 }
    }

    pub fn stress_components(&self) -> StressComponents {
        let s = self.state.sign();
        StressComponents {
            n11: s * self.l1 * self.l1,
            n22: s * (self.l2 * self.l2 + self.l3 * self.l3),
            n12: s * self.l1 * self.l2,
        }
    }

    /// `Phi = N22/2 dx1^2 + N11/2 dx2^2 - N12 dx1 dx2 + c0 + c1 x1 + c2 x2`,
    /// with `dx = x - centroid`.
    pub fn eval(&self, p: Point) -> f64 {
        let n = self.stress_components();
        let d1 = p.x1 - self.centroid.x1;
        let d2 = p.x2 - self.centroid.x2;
        0.5 * n.n22 * d1 * d1 + 0.5 * n.n11 * d2 * d2 - n.n12 * d1 * d2 + self.c0 + self.c1 * p.x1 + self.c2 * p.x2
    }
}

/// Concentrated load regularized as an isotropic Gaussian whose plan integral is `magnitude`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLoad {
    /// kN
    pub magnitude: f64,
    pub center: Point,
    /// m
    pub sigma: f64,
}

impl PointLoad {
    pub fn density(&self, p: Point) -> f64 {
        let s2 = self.sigma * self.sigma;
        self.magnitude / (2.0 * PI * s2) * (-p.dist2(&self.center) / (2.0 * s2)).exp()
    }
}

/// Lower limit of the cumulative horizontal load integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationReference {
    /// Bounding-box edge the horizontal load points away from, so that `h1, h2 >= 0`.
    #[default]
    Upwind,
    Centroid,
    Point(Point),
}

impl IntegrationReference {
    pub fn resolve(&self, domain: &DomainSpec, lambda1: f64, lambda2: f64) -> Point {
        match *self {
            IntegrationReference::Upwind => {
                let (lo, hi) = domain.bounding_box();
                Point::new(if lambda1 >= 0.0 { lo.x1 } else { hi.x1 }, if lambda2 >= 0.0 { lo.x2 } else { hi.x2 })
            }
            IntegrationReference::Centroid => domain.centroid(),
            IntegrationReference::Point(p) => p,
        }
    }
}

/// Vertical self-weight, regularized point loads and pseudo-static horizontal action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadModel {
    /// Specific weight, kN/m^3.
    pub rho: f64,
    /// Thickness, m.
    pub thickness: f64,
    #[serde(default)]
    pub point_loads: Vec<PointLoad>,
    #[serde(default)]
    pub alpha_h: f64,
    /// Direction of the horizontal action, rad.
    #[serde(default)]
    pub theta_h: f64,
    /// Resolved lower limit of the `h1`/`h2` integrals.
    pub reference: Point,
}

impl LoadModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho >= 0.0
            && self.thickness > 0.0
            && self.alpha_h >= 0.0
            && self.theta_h.is_finite()
            && self.point_loads.iter().all(|pl| pl.sigma > 0.0 && pl.magnitude.is_finite());
        if ok {
            Ok(())
        } else {
            Err(MeaError::Config(format!("invalid load model {self:?}")))
        }
    }

    pub fn lambdas(&self) -> (f64, f64) {
        (self.alpha_h * self.theta_h.cos(), self.alpha_h * self.theta_h.sin())
    }

    pub fn self_weight(&self) -> f64 {
        self.rho * self.thickness
    }

    pub fn vertical_load(&self, p: Point) -> f64 {
        self.self_weight() + self.point_loads.iter().map(|pl| pl.density(p)).sum::<f64>()
    }

    pub fn horizontal_loads(&self, p: Point) -> (f64, f64) {
        let q = self.vertical_load(p);
        let (l1, l2) = self.lambdas();
        (l1 * q, l2 * q)
    }

    /// Closed-form `h1 = int_{x1_ref}^{x1} p1 ds` and `h2 = int_{x2_ref}^{x2} p2 ds`.
    pub fn cumulative_loads(&self, p: Point) -> (f64, f64) {
        let (l1, l2) = self.lambdas();
        let r = self.reference;
        let mut i1 = self.self_weight() * (p.x1 - r.x1);
        let mut i2 = self.self_weight() * (p.x2 - r.x2);
        for pl in &self.point_loads {
            let s = pl.sigma;
            let c = pl.center;
            i1 += pl.magnitude * gauss_pdf(p.x2 - c.x2, s) * gauss_cdf_diff(p.x1 - c.x1, r.x1 - c.x1, s);
            i2 += pl.magnitude * gauss_pdf(p.x1 - c.x1, s) * gauss_cdf_diff(p.x2 - c.x2, r.x2 - c.x2, s);
        }
        (l1 * i1, l2 * i2)
    }
}

/// 1D normal density with standard deviation `s`.
fn gauss_pdf(u: f64, s: f64) -> f64 {
    (-0.5 * (u / s).powi(2)).exp() / ((2.0 * PI).sqrt() * s)
}

/// `Phi(a/s) - Phi(b/s)` for the standard normal CDF, avoiding cancellation in the tails.
fn gauss_cdf_diff(a: f64, b: f64, s: f64) -> f64 {
    let (za, zb) = (a / (s * SQRT_2), b / (s * SQRT_2));
    if za > 0.0 && zb > 0.0 {
        0.5 * (libm::erfc(zb) - libm::erfc(za))
    } else if za < 0.0 && zb < 0.0 {
        0.5 * (libm::erfc(-za) - libm::erfc(-zb))
    } else {
        0.5 * (libm::erf(za) - libm::erf(zb))
    }
}

/// Airy field and loads together: everything the equilibrium PDE needs at a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeaContext {
    pub airy: AiryField,
    pub loads: LoadModel,
}

/// Projected stresses `S11 = N11 - h2`, `S22 = N22 - h1`, `S12 = N12`.
pub fn projected_stresses(airy: &AiryField, loads: &LoadModel, p: Point) -> (f64, f64, f64) {
    let n = airy.stress_components();
    let (h1, h2) = loads.cumulative_loads(p);
    (n.n11 - h2, n.n22 - h1, n.n12)
}

impl MeaContext {
    pub fn coefficients(&self, p: Point) -> PdeCoefficients {
        let (s11, s22, s12) = projected_stresses(&self.airy, &self.loads, p);
        let q = self.loads.vertical_load(p);
        let (l1, l2) = self.loads.lambdas();
        PdeCoefficients { s11, s22, s12, p1: l1 * q, p2: l2 * q, q }
    }
}

/// Inequality test of the unilateral condition on one projected stress tensor.
pub fn tensor_admissible(state: StressState, s11: f64, s22: f64, s12: f64) -> bool {
    let det_ok = s11 * s22 - s12 * s12 >= 0.0;
    match state {
        StressState::Tension => s11 >= 0.0 && s22 >= 0.0 && det_ok,
        StressState::Compression => s11 <= 0.0 && s22 <= 0.0 && det_ok,
    }
}

/// Signed distance to inadmissibility in stress units: smallest eigenvalue for tension,
/// negated largest eigenvalue for compression.
pub fn admissibility_margin(state: StressState, s11: f64, s22: f64, s12: f64) -> f64 {
    let mean = 0.5 * (s11 + s22);
    let rad = (0.25 * (s11 - s22).powi(2) + s12 * s12).sqrt();
    match state {
        StressState::Tension => mean - rad,
        StressState::Compression => -(mean + rad),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub state: StressState,
    pub passed: bool,
    pub worst_margin: f64,
    pub worst_point: Point,
    pub sample_count: usize,
    pub seed: u64,
}

/// Checks the sign-definiteness of the total projected stress tensor at `n_samples`
/// interior and `n_samples` boundary points.
pub fn check_admissibility(
    airy: &AiryField,
    loads: &LoadModel,
    domain: &DomainSpec,
    n_samples: usize,
    seed: u64,
) -> Result<AdmissibilityReport> {
    if n_samples == 0 {
        return Err(MeaError::Config("admissibility check needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = sample_interior(domain, n_samples, &mut rng)?.points;
    points.extend(sample_boundary_uniform(domain, n_samples, &mut rng)?.points);
    let mut passed = true;
    let mut worst = (f64::INFINITY, points[0]);
    for &p in &points {
        let (s11, s22, s12) = projected_stresses(airy, loads, p);
        passed &= tensor_admissible(airy.state, s11, s22, s12);
        let m = admissibility_margin(airy.state, s11, s22, s12);
        if m < worst.0 {
            worst = (m, p);
        }
    }
    Ok(AdmissibilityReport {
        state: airy.state,
        passed,
        worst_margin: worst.0,
        worst_point: worst.1,
        sample_count: points.len(),
        seed,
    })
}

/// Direction of the rectangle's diagonal, `atan2(b, l)`.
pub fn diagonal_direction(l: f64, b: f64) -> f64 {
    b.atan2(l)
}
