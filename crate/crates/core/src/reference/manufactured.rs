//! Closed-form surfaces with the loads that make them exact solutions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{arch_height, BoundaryParam, BoundaryProfile, DomainSpec, FourierSeries, Point};
use crate::mea::MeaContext;
use crate::residual::{CoefficientField, Jet, PdeCoefficients, SurfaceField};

/// Fourier order used when re-expanding a circular boundary trace.
pub const PROJECTION_ORDER: usize = 16;
pub const PROJECTION_TOLERANCE: f64 = 1e-10;

/// Catalog of surfaces with closed-form jets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManufacturedSolution {
    Constant { c: f64 },
    /// `sum c x1^i x2^j` over `(i, j, c)` terms.
    Polynomial { terms: Vec<(u32, u32, f64)> },
    /// `amplitude cos(k1 x1 + phase1) cos(k2 x2 + phase2)`
    Trig { amplitude: f64, k1: f64, phase1: f64, k2: f64, phase2: f64 },
    /// `amplitude exp(-|x - center|^2 / (2 width^2))`
    GaussianBump { amplitude: f64, center: Point, width: f64 },
    Arch { h_arch: f64, l: f64 },
    Sum { parts: Vec<ManufacturedSolution> },
    Product { parts: Vec<ManufacturedSolution> },
}

fn monomial(x: f64, n: u32) -> [f64; 3] {
    let p = |k: u32| if k <= n { x.powi((n - k) as i32) } else { 0.0 };
    let nf = n as f64;
    [p(0), nf * p(1), nf * (nf - 1.0) * p(2)]
}

impl ManufacturedSolution {
    pub fn jet(&self, p: Point) -> Jet {
        match self {
            Self::Constant { c } => Jet::constant(*c),
            Self::Polynomial { terms } => {
                let mut acc = Jet::default();
                for &(i, j, c) in terms {
                    let [u, u1, u11] = monomial(p.x1, i);
                    let [v, v1, v11] = monomial(p.x2, j);
                    acc = acc + Jet { f: u * v, f1: u1 * v, f2: u * v1, f11: u11 * v, f12: u1 * v1, f22: u * v11 }.scale(c);
                }
                acc
            }
            Self::Trig { amplitude, k1, phase1, k2, phase2 } => {
                let (x1, x2) = Jet::coords(p);
                ((x1 * *k1 + *phase1).cos() * (x2 * *k2 + *phase2).cos()).scale(*amplitude)
            }
            Self::GaussianBump { amplitude, center, width } => {
                let (x1, x2) = Jet::coords(p);
                let d1 = x1 - center.x1;
                let d2 = x2 - center.x2;
                ((d1 * d1 + d2 * d2).scale(-0.5 / (width * width))).exp().scale(*amplitude)
            }
            Self::Arch { h_arch, l } => {
                let (x1, _) = Jet::coords(p);
                ((x1 * (2.0 * PI / l)).cos() + 1.0).scale(0.5 * h_arch)
            }
            Self::Sum { parts } => parts.iter().fold(Jet::default(), |acc, s| acc + s.jet(p)),
            Self::Product { parts } => parts.iter().fold(Jet::constant(1.0), |acc, s| acc * s.jet(p)),
        }
    }

    pub fn value(&self, p: Point) -> f64 {
        self.jet(p).f
    }

    /// Named cases used by the command line and the acceptance suite.
    pub fn preset(id: &str, domain: &DomainSpec) -> Result<Self> {
        let s = match (id, domain) {
            ("constant", _) => Self::Constant { c: 1.0 },
            ("quadratic", _) => Self::Polynomial { terms: vec![(2, 0, 1.0), (0, 2, 1.0)] },
            // arch trace plus a bubble vanishing on all four sides
            ("bubble", DomainSpec::Rectangle { l, b }) => Self::Sum {
                parts: vec![
                    Self::Arch { h_arch: 1.0, l: *l },
                    Self::Trig { amplitude: 0.5, k1: PI / l, phase1: 0.0, k2: PI / b, phase2: 0.0 },
                ],
            },
            ("smooth", DomainSpec::Rectangle { l, b }) => Self::Sum {
                parts: vec![
                    Self::Arch { h_arch: 1.0, l: *l },
                    Self::Trig { amplitude: 1.0, k1: PI / l, phase1: -0.5 * PI, k2: PI / b, phase2: 0.0 },
                ],
            },
            // 1 - r^2/R^2 + 0.1 r^4 cos(4 theta) / R^4
            ("polar", DomainSpec::Disk { radius }) => {
                let (r2, r4) = (radius * radius, radius.powi(4));
                Self::Polynomial {
                    terms: vec![
                        (0, 0, 1.0),
                        (2, 0, -1.0 / r2),
                        (0, 2, -1.0 / r2),
                        (4, 0, 0.1 / r4),
                        (2, 2, -0.6 / r4),
                        (0, 4, 0.1 / r4),
                    ],
                }
            }
            // 1 + r^2/R^2 - 0.2 r^3 cos(3 theta) / R^3
            ("polar", DomainSpec::Annulus { r_out, .. }) => {
                let (r2, r3) = (r_out * r_out, r_out.powi(3));
                Self::Polynomial {
                    terms: vec![(0, 0, 1.0), (2, 0, 1.0 / r2), (0, 2, 1.0 / r2), (3, 0, -0.2 / r3), (1, 2, 0.6 / r3)],
                }
            }
            _ => return Err(MeaError::Config(format!("no manufactured case `{id}` for {domain:?}"))),
        };
        Ok(s)
    }
}

/// Exact solution `f*`, the load `q*` it induces, and boundary data matching the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedCase {
    pub id: String,
    pub solution: ManufacturedSolution,
    pub domain: DomainSpec,
    pub profile: BoundaryProfile,
    /// Max deviation between the trace of `f*` and `profile`.
    pub projection_error: f64,
    pub context: MeaContext,
}

/// JSON summary of a manufactured case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedDescriptor {
    pub id: String,
    pub solution: ManufacturedSolution,
    pub domain: DomainSpec,
    pub fourier_order: Option<usize>,
    pub projection_error: f64,
}

/// Discrete Fourier coefficients up to `order` of `g` sampled at `m` equispaced angles.
fn project(g: &dyn Fn(f64) -> f64, order: usize, m: usize) -> FourierSeries {
    let samples: Vec<(f64, f64)> = (0..m).map(|n| {
        let t = 2.0 * PI * n as f64 / m as f64;
        (t, g(t))
    }).collect();
    let coeff = |k: usize, trig: fn(f64) -> f64| {
        samples.iter().map(|&(t, v)| v * trig(k as f64 * t)).sum::<f64>() * 2.0 / m as f64
    };
    FourierSeries {
        a0: samples.iter().map(|s| s.1).sum::<f64>() / m as f64,
        cos: (1..=order).map(|k| coeff(k, f64::cos)).collect(),
        sin: (1..=order).map(|k| coeff(k, f64::sin)).collect(),
    }
}

fn projection_gap(g: &dyn Fn(f64) -> f64, series: &FourierSeries) -> f64 {
    // off-grid check angles
    (0..1000).map(|n| 2.0 * PI * (n as f64 + 0.37) / 1000.0).map(|t| (g(t) - series.eval(t)).abs()).fold(0.0, f64::max)
}

/// Builds the case. Boundary data on circular domains is re-expanded to order
/// [`PROJECTION_ORDER`]; on a rectangle the trace must be an arch.
pub fn make_manufactured(id: &str, solution: ManufacturedSolution, domain: DomainSpec, context: MeaContext) -> Result<ManufacturedCase> {
    domain.validate()?;
    context.loads.validate()?;
    let m = 4 * PROJECTION_ORDER + 8;
    let (profile, projection_error) = match domain {
        DomainSpec::Rectangle { l, b } => {
            // the trace must match an arch whose height is read off at mid-span
            let h = solution.value(Point::new(0.0, -0.5 * b));
            let mut gap: f64 = 0.0;
            for n in 0..=400 {
                let t = n as f64 / 400.0;
                let x1 = (t - 0.5) * l;
                let x2 = (t - 0.5) * b;
                let a = arch_height(h, l, x1);
                gap = gap
                    .max((solution.value(Point::new(x1, -0.5 * b)) - a).abs())
                    .max((solution.value(Point::new(x1, 0.5 * b)) - a).abs())
                    .max(solution.value(Point::new(-0.5 * l, x2)).abs())
                    .max(solution.value(Point::new(0.5 * l, x2)).abs());
            }
            (BoundaryProfile::Arch { h_arch: h }, gap)
        }
        DomainSpec::Disk { .. } => {
            let g = |t: f64| solution.value(domain.boundary_point(BoundaryParam::outer(t)));
            let series = project(&g, PROJECTION_ORDER, m);
            let gap = projection_gap(&g, &series);
            (BoundaryProfile::Disk { series }, gap)
        }
        DomainSpec::Annulus { .. } => {
            let go = |t: f64| solution.value(domain.boundary_point(BoundaryParam::outer(t)));
            let gi = |t: f64| solution.value(domain.boundary_point(BoundaryParam::inner(t)));
            let outer = project(&go, PROJECTION_ORDER, m);
            let inner = project(&gi, PROJECTION_ORDER, m);
            let gap = projection_gap(&go, &outer).max(projection_gap(&gi, &inner));
            (BoundaryProfile::Annulus { outer, inner }, gap)
        }
    };
    let tol = PROJECTION_TOLERANCE * (1.0 + profile_scale(&profile));
    if !(projection_error <= tol) {
        return Err(MeaError::Projection { error: projection_error, tolerance: tol });
    }
    Ok(ManufacturedCase { id: id.to_string(), solution, domain, profile, projection_error, context })
}

fn profile_scale(p: &BoundaryProfile) -> f64 {
    match p {
        BoundaryProfile::Arch { h_arch } => h_arch.abs(),
        BoundaryProfile::Disk { series } => series.max_abs_coefficient(),
        BoundaryProfile::Annulus { outer, inner } => outer.max_abs_coefficient().max(inner.max_abs_coefficient()),
    }
}

impl ManufacturedCase {
    pub fn descriptor(&self) -> ManufacturedDescriptor {
        ManufacturedDescriptor {
            id: self.id.clone(),
            solution: self.solution.clone(),
            domain: self.domain,
            fourier_order: self.domain.is_circular().then_some(PROJECTION_ORDER),
            projection_error: self.projection_error,
        }
    }

    /// `q* = S11 f*,22 + S22 f*,11 + 2 S12 f*,12 - p1 f*,1 - p2 f*,2`
    pub fn source(&self, p: Point) -> f64 {
        let mut c = self.context.coefficients(p);
        c.q = 0.0;
        crate::residual::pde_residual(&self.solution.jet(p), &c)
    }
}

impl CoefficientField for ManufacturedCase {
    fn coefficients(&self, p: Point) -> PdeCoefficients {
        let mut c = self.context.coefficients(p);
        c.q = 0.0;
        c.q = crate::residual::pde_residual(&self.solution.jet(p), &c);
        c
    }
}

impl SurfaceField for ManufacturedCase {
    fn jet(&self, p: Point) -> Result<Jet> {
        Ok(self.solution.jet(p))
    }
}

impl SurfaceField for ManufacturedSolution {
    fn jet(&self, p: Point) -> Result<Jet> {
        Ok(ManufacturedSolution::jet(self, p))
    }
}
