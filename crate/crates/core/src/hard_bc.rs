//! Exact Dirichlet enforcement through the trial field `f = D * N + G`.
//!
//! `D` vanishes on the boundary and is positive inside; `G` reproduces the
//! boundary heights. Circular lifts are evaluated as real parts of holomorphic
//! functions of `z = x1 + i x2`, which gives Cartesian derivatives directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{boundary_height, BoundaryParam, BoundaryProfile, DomainSpec, FourierSeries, Point};
use crate::network::{JetOrder, MlpParams};
use crate::residual::{Jet, SurfaceField};

/// Highest supported harmonic order of circular lifts.
pub const MAX_HARMONIC_ORDER: usize = 32;

/// Distance-like function and its jet.
pub fn distance_eval(domain: &DomainSpec, p: Point) -> Jet {
    match *domain {
        DomainSpec::Rectangle { l, b } => {
            let u = Jet::x1(p.x1).scale(2.0 / l);
            let v = Jet::x2(p.x2).scale(2.0 / b);
            (Jet::constant(1.0) - u * u) * (Jet::constant(1.0) - v * v)
        }
        DomainSpec::Disk { radius } => {
            let r2 = 1.0 / (radius * radius);
            Jet {
                f: 1.0 - (p.x1 * p.x1 + p.x2 * p.x2) * r2,
                f1: -2.0 * p.x1 * r2,
                f2: -2.0 * p.x2 * r2,
                f11: -2.0 * r2,
                f12: 0.0,
                f22: -2.0 * r2,
            }
        }
        DomainSpec::Annulus { r_in, r_out } => {
            let dmax = 0.25 * (r_out - r_in) * (r_out - r_in);
            let (x1, x2) = Jet::coords(p);
            let r = (x1 * x1 + x2 * x2).sqrt();
            let d = (r.f - r_in) * (r_out - r.f) / dmax;
            r.chain(d, (r_in + r_out - 2.0 * r.f) / dmax, -2.0 / dmax)
        }
    }
}

/// Boundary lift `G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiftSpec {
    RectArch {
        h_arch: f64,
        l: f64,
    },
    DiskFourier {
        radius: f64,
        series: FourierSeries,
    },
    /// `A0 + B0 ln r + sum_k [(A_k r^k + B_k r^-k) cos k theta + (C_k r^k + D_k r^-k) sin k theta]`
    AnnulusFourier {
        r_in: f64,
        r_out: f64,
        a0: f64,
        b0: f64,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        d: Vec<f64>,
    },
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_HARMONIC_ORDER {
        return Err(MeaError::Config(format!(
            "harmonic order {order} exceeds the supported maximum {MAX_HARMONIC_ORDER}"
        )));
    }
    Ok(())
}

pub fn fit_disk_lift(series: &FourierSeries, radius: f64) -> Result<LiftSpec> {
    check_order(series.order())?;
    DomainSpec::Disk { radius }.validate()?;
    Ok(LiftSpec::DiskFourier { radius, series: series.clone() })
}

/// Solves the boundary-matching systems of the annulus lift harmonic by harmonic.
pub fn fit_annulus_lift(outer: &FourierSeries, inner: &FourierSeries, r_in: f64, r_out: f64) -> Result<LiftSpec> {
    DomainSpec::Annulus { r_in, r_out }.validate()?;
    let order = outer.order().max(inner.order());
    check_order(order)?;
    let log_ratio = (r_out / r_in).ln();
    let b0 = (outer.a0 - inner.a0) / log_ratio;
    let a0 = outer.a0 - b0 * r_out.ln();
    let (mut a, mut b, mut c, mut d) = (vec![], vec![], vec![], vec![]);
    for k in 1..=order {
        let k = k as i32;
        let (po, mo, pi, mi) = (r_out.powi(k), r_out.powi(-k), r_in.powi(k), r_in.powi(-k));
        let det = po * mi - mo * pi;
        if det == 0.0 || !det.is_finite() {
            return Err(MeaError::InvalidDomain(format!("singular annulus lift system at k = {k}")));
        }
        let solve = |g_out: f64, g_in: f64| ((g_out * mi - mo * g_in) / det, (po * g_in - pi * g_out) / det);
        let ku = k as usize;
        let (ak, bk) = solve(outer.a(ku), inner.a(ku));
        let (ck, dk) = solve(outer.b(ku), inner.b(ku));
        a.push(ak);
        b.push(bk);
        c.push(ck);
        d.push(dk);
    }
    Ok(LiftSpec::AnnulusFourier { r_in, r_out, a0, b0, a, b, c, d })
}

/// Lift matching a boundary profile on its domain.
pub fn fit_lift(domain: &DomainSpec, profile: &BoundaryProfile) -> Result<LiftSpec> {
    domain.validate()?;
    profile.validate_for(domain)?;
    match (domain, profile) {
        (DomainSpec::Rectangle { l, .. }, BoundaryProfile::Arch { h_arch }) => {
            Ok(LiftSpec::RectArch { h_arch: *h_arch, l: *l })
        }
        (DomainSpec::Disk { radius }, BoundaryProfile::Disk { series }) => fit_disk_lift(series, *radius),
        (DomainSpec::Annulus { r_in, r_out }, BoundaryProfile::Annulus { outer, inner }) => {
            fit_annulus_lift(outer, inner, *r_in, *r_out)
        }
        _ => unreachable!("validate_for rejects mismatched profiles"),
    }
}

/// Jet of `Re F(z)` from `F, F', F''`.
fn holomorphic_jet(f: Complex64, df: Complex64, d2f: Complex64) -> Jet {
    Jet { f: f.re, f1: df.re, f2: -df.im, f11: d2f.re, f12: -d2f.im, f22: -d2f.re }
}

impl LiftSpec {
    pub fn jet(&self, p: Point) -> Result<Jet> {
        let z = Complex64::new(p.x1, p.x2);
        match self {
            LiftSpec::RectArch { h_arch, l } => {
                let w = std::f64::consts::PI * 2.0 / l;
                let (s, c) = (w * p.x1).sin_cos();
                let h = 0.5 * h_arch;
                Ok(Jet { f: h * (1.0 + c), f1: -h * w * s, f11: -h * w * w * c, ..Default::default() })
            }
            LiftSpec::DiskFourier { radius, series } => {
                let u = z / radius;
                let (mut f, mut df, mut d2f) = (Complex64::new(series.a0, 0.0), Complex64::default(), Complex64::default());
                // powers[k] = u^k
                let mut powers = vec![Complex64::new(1.0, 0.0)];
                for k in 1..=series.order() {
                    powers.push(powers[k - 1] * u);
                    let coef = Complex64::new(series.a(k), -series.b(k));
                    let kf = k as f64;
                    f += coef * powers[k];
                    df += coef * powers[k - 1] * (kf / radius);
                    if k >= 2 {
                        d2f += coef * powers[k - 2] * (kf * (kf - 1.0) / (radius * radius));
                    }
                }
                Ok(holomorphic_jet(f, df, d2f))
            }
            LiftSpec::AnnulusFourier { r_in, a0, b0, a, b, c, d, .. } => {
                let r = p.radius();
                if r < r_in * (1.0 - 1e-12) {
                    return Err(MeaError::OutOfDomain {
                        x1: p.x1,
                        x2: p.x2,
                        reason: format!("radius {r} below the annulus inner radius {r_in}"),
                    });
                }
                let inv = z.inv();
                let mut f = Complex64::new(a0 + b0 * r.ln(), 0.0);
                let mut df = inv * b0;
                let mut d2f = -inv * inv * b0;
                let (mut zk, mut zmk) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
                for k in 1..=a.len() {
                    let kf = k as f64;
                    // zk = z^(k-1) on entry
                    let zkm1 = zk;
                    zk *= z;
                    zmk *= inv;
                    let pos = Complex64::new(a[k - 1], -c[k - 1]);
                    let neg = Complex64::new(b[k - 1], d[k - 1]);
                    f += pos * zk + neg * zmk;
                    df += pos * zkm1 * kf - neg * zmk * inv * kf;
                    if k >= 2 {
                        d2f += pos * zkm1 * inv * (kf * (kf - 1.0));
                    }
                    d2f += neg * zmk * inv * inv * (kf * (kf + 1.0));
                }
                Ok(holomorphic_jet(f, df, d2f))
            }
        }
    }

    pub fn value(&self, p: Point) -> Result<f64> {
        Ok(self.jet(p)?.f)
    }
}

pub fn lift_eval(lift: &LiftSpec, p: Point) -> Result<Jet> {
    lift.jet(p)
}

/// `f = D N + G` with the product rule carried through second order.
pub fn compose(d: &Jet, n: &Jet, g: &Jet) -> Jet {
    *d * *n + *g
}

/// Adjoint of [`compose`] with respect to the network jet.
pub fn compose_adjoint(d: &Jet, fbar: &Jet) -> Jet {
    Jet {
        f: fbar.f * d.f + fbar.f1 * d.f1 + fbar.f2 * d.f2 + fbar.f11 * d.f11 + fbar.f12 * d.f12 + fbar.f22 * d.f22,
        f1: fbar.f1 * d.f + 2.0 * fbar.f11 * d.f1 + fbar.f12 * d.f2,
        f2: fbar.f2 * d.f + fbar.f12 * d.f1 + 2.0 * fbar.f22 * d.f2,
        f11: fbar.f11 * d.f,
        f12: fbar.f12 * d.f,
        f22: fbar.f22 * d.f,
    }
}

/// Network composed with a distance function and lift.
#[derive(Clone, Copy, Debug)]
pub struct HardField<'a> {
    pub net: &'a MlpParams,
    pub domain: &'a DomainSpec,
    pub lift: &'a LiftSpec,
}

impl<'a> HardField<'a> {
    pub fn new(net: &'a MlpParams, domain: &'a DomainSpec, lift: &'a LiftSpec) -> Self {
        Self { net, domain, lift }
    }
}

pub fn hard_field_jet(hf: &HardField<'_>, p: Point) -> Result<Jet> {
    hf.jet(p)
}

impl SurfaceField for HardField<'_> {
    fn jet(&self, p: Point) -> Result<Jet> {
        let n = self.net.forward_jet(p)?;
        Ok(compose(&distance_eval(self.domain, p), &n, &self.lift.jet(p)?))
    }

    fn jets(&self, points: &[Point]) -> Result<Vec<Jet>> {
        let n = self.net.forward_batch(points, JetOrder::Second)?.output_jets();
        points.iter().zip(&n).map(|(&p, n)| Ok(compose(&distance_eval(self.domain, p), n, &self.lift.jet(p)?))).collect()
    }

    fn values(&self, points: &[Point]) -> Result<Vec<f64>> {
        let n = self.net.forward_batch(points, JetOrder::Value)?.into_output();
        points
            .iter()
            .zip(&n)
            .map(|(&p, n)| Ok(distance_eval(self.domain, p).f * n + self.lift.value(p)?))
            .collect()
    }
}

/// Boundary samples prepared for checking `|f - b|` of a hard field cheaply.
#[derive(Clone, Debug)]
pub struct BoundaryAudit {
    pub points: Vec<Point>,
    pub targets: Vec<f64>,
    distance: Vec<f64>,
    lift_gap: Vec<f64>,
}

impl BoundaryAudit {
    pub fn new(domain: &DomainSpec, profile: &BoundaryProfile, lift: &LiftSpec, params: &[BoundaryParam]) -> Result<Self> {
        let mut audit = Self { points: vec![], targets: vec![], distance: vec![], lift_gap: vec![] };
        for &t in params {
            let p = domain.boundary_point(t);
            let b = boundary_height(domain, profile, t);
            audit.distance.push(distance_eval(domain, p).f.abs());
            audit.lift_gap.push((lift.value(p)? - b).abs());
            audit.points.push(p);
            audit.targets.push(b);
        }
        Ok(audit)
    }

    /// Evenly spaced samples along the whole boundary.
    pub fn uniform(domain: &DomainSpec, profile: &BoundaryProfile, lift: &LiftSpec, n: usize) -> Result<Self> {
        let params: Vec<BoundaryParam> = match domain {
            DomainSpec::Annulus { r_in, r_out } => {
                let n_in = ((n as f64) * r_in / (r_in + r_out)).round() as usize;
                let outer = (0..n - n_in).map(|i| BoundaryParam::outer(std::f64::consts::TAU * i as f64 / (n - n_in) as f64));
                let inner = (0..n_in).map(|i| BoundaryParam::inner(std::f64::consts::TAU * i as f64 / n_in as f64));
                outer.chain(inner).collect()
            }
            DomainSpec::Rectangle { .. } | DomainSpec::Disk { .. } => {
                let len = match domain {
                    DomainSpec::Rectangle { .. } => domain.perimeter(),
                    _ => std::f64::consts::TAU,
                };
                (0..n).map(|i| BoundaryParam::outer(len * i as f64 / n as f64)).collect()
            }
        };
        Self::new(domain, profile, lift, &params)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `1e-10 (1 + max |b|)`
    pub fn tolerance(&self) -> f64 {
        1e-10 * (1.0 + self.targets.iter().fold(0.0f64, |m, b| m.max(b.abs())))
    }

    /// Upper bound on `max |f - b|` for any network with `|N| <= n_bound`.
    pub fn certified_bound(&self, n_bound: f64) -> f64 {
        self.distance.iter().zip(&self.lift_gap).fold(0.0f64, |m, (d, g)| m.max(d * n_bound + g))
    }

    /// Exact `max |f - b|` for a given network.
    pub fn max_error(&self, net: &MlpParams) -> Result<f64> {
        let n = net.forward_batch(&self.points, JetOrder::Value)?.into_output();
        Ok(self
            .distance
            .iter()
            .zip(&self.lift_gap)
            .zip(&n)
            .fold(0.0f64, |m, ((d, g), n)| m.max(d * n.abs() + g)))
    }
}
