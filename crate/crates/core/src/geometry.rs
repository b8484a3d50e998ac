//! Plan domains, boundary height profiles and collocation sampling.
//!
//! All domains are centered at the origin. The three-legged and four-legged
//! shells are modeled as a full annulus and a full disk in plan; the legs come
//! only from the Fourier boundary-height profile.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};

/// Number of intervals of the angular grid used to invert the
/// curvature-weighted boundary density.
pub const CURVATURE_GRID: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn radius(&self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn angle(&self) -> f64 {
        self.x2.atan2(self.x1)
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let d1 = self.x1 - other.x1;
        let d2 = self.x2 - other.x2;
        d1 * d1 + d2 * d2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// `l` along x1, `b` along x2.
    Rectangle { l: f64, b: f64 },
    Disk { radius: f64 },
    Annulus { r_in: f64, r_out: f64 },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DomainSpec::Rectangle { l, b } => l > 0.0 && b > 0.0 && l.is_finite() && b.is_finite(),
            DomainSpec::Disk { radius } => radius > 0.0 && radius.is_finite(),
            DomainSpec::Annulus { r_in, r_out } => r_in > 0.0 && r_in < r_out && r_out.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MeaError::InvalidDomain(format!("{self:?}")))
        }
    }

    /// Strict interior test; boundary points are excluded.
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            DomainSpec::Rectangle { l, b } => p.x1.abs() < 0.5 * l && p.x2.abs() < 0.5 * b,
            DomainSpec::Disk { radius } => p.x1 * p.x1 + p.x2 * p.x2 < radius * radius,
            DomainSpec::Annulus { r_in, r_out } => {
                let r2 = p.x1 * p.x1 + p.x2 * p.x2;
                r2 > r_in * r_in && r2 < r_out * r_out
            }
        }
    }

    /// Closed-set membership with a relative slack, used to validate evaluation points.
    pub fn contains_closure(&self, p: Point, rel_tol: f64) -> bool {
        let s = self.characteristic_size() * rel_tol;
        match *self {
            DomainSpec::Rectangle { l, b } => p.x1.abs() <= 0.5 * l + s && p.x2.abs() <= 0.5 * b + s,
            DomainSpec::Disk { radius } => p.radius() <= radius + s,
            DomainSpec::Annulus { r_in, r_out } => {
                let r = p.radius();
                r >= r_in - s && r <= r_out + s
            }
        }
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> (Point, Point) {
        let (h1, h2) = match *self {
            DomainSpec::Rectangle { l, b } => (0.5 * l, 0.5 * b),
            DomainSpec::Disk { radius } => (radius, radius),
            DomainSpec::Annulus { r_out, .. } => (r_out, r_out),
        };
        (Point::new(-h1, -h2), Point::new(h1, h2))
    }

    pub fn centroid(&self) -> Point {
        Point::new(0.0, 0.0)
    }

    pub fn characteristic_size(&self) -> f64 {
        match *self {
            DomainSpec::Rectangle { l, b } => l.max(b),
            DomainSpec::Disk { radius } => 2.0 * radius,
            DomainSpec::Annulus { r_out, .. } => 2.0 * r_out,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            DomainSpec::Rectangle { l, b } => l * b,
            DomainSpec::Disk { radius } => PI * radius * radius,
            DomainSpec::Annulus { r_in, r_out } => PI * (r_out * r_out - r_in * r_in),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            DomainSpec::Rectangle { l, b } => 2.0 * (l + b),
            DomainSpec::Disk { radius } => TAU * radius,
            DomainSpec::Annulus { r_in, r_out } => TAU * (r_in + r_out),
        }
    }

    pub fn is_circular(&self) -> bool {
        !matches!(self, DomainSpec::Rectangle { .. })
    }

    /// Maps a boundary parameter to its plan point.
    ///
    /// Rectangle: arc length measured counter-clockwise from the corner
    /// `(-l/2, -b/2)`. Circular kinds: polar angle on the selected circle.
    pub fn boundary_point(&self, param: BoundaryParam) -> Point {
        match *self {
            DomainSpec::Rectangle { l, b } => {
                let s = param.t.rem_euclid(2.0 * (l + b));
                let (hl, hb) = (0.5 * l, 0.5 * b);
                if s < l {
                    Point::new(-hl + s, -hb)
                } else if s < l + b {
                    Point::new(hl, -hb + (s - l))
                } else if s < 2.0 * l + b {
                    Point::new(hl - (s - l - b), hb)
                } else {
                    Point::new(-hl, hb - (s - 2.0 * l - b))
                }
            }
            DomainSpec::Disk { radius } => Point::new(radius * param.t.cos(), radius * param.t.sin()),
            DomainSpec::Annulus { r_in, r_out } => {
                let r = if param.inner { r_in } else { r_out };
                Point::new(r * param.t.cos(), r * param.t.sin())
            }
        }
    }
}

/// Position along the boundary: arc length (rectangle) or angle (circles).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParam {
    pub t: f64,
    /// Annulus only: the point sits on the inner circle.
    #[serde(default)]
    pub inner: bool,
}

impl BoundaryParam {
    pub const fn outer(t: f64) -> Self {
        Self { t, inner: false }
    }

    pub const fn inner(t: f64) -> Self {
        Self { t, inner: true }
    }
}

/// Truncated Fourier series in the polar angle,
/// `a0 + sum_k (a_k cos k theta + b_k sin k theta)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    pub a0: f64,
    /// `a_1 .. a_K`
    #[serde(default)]
    pub cos: Vec<f64>,
    /// `b_1 .. b_K`
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierSeries {
    pub fn constant(a0: f64) -> Self {
        Self { a0, cos: Vec::new(), sin: Vec::new() }
    }

    /// Single cosine harmonic on top of a constant.
    pub fn cosine(a0: f64, k: usize, amplitude: f64) -> Self {
        let mut cos = vec![0.0; k];
        if k > 0 {
            cos[k - 1] = amplitude;
        }
        Self { a0, cos, sin: vec![0.0; k] }
    }

    pub fn order(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn a(&self, k: usize) -> f64 {
        if k == 0 {
            self.a0
        } else {
            self.cos.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn b(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.sin.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut v = self.a0;
        for k in 1..=self.order() {
            let (s, c) = (k as f64 * theta).sin_cos();
            v += self.a(k) * c + self.b(k) * s;
        }
        v
    }

    /// Second derivative in theta, the boundary curvature measure.
    pub fn curvature(&self, theta: f64) -> f64 {
        let mut v = 0.0;
        for k in 1..=self.order() {
            let kf = k as f64;
            let (s, c) = (kf * theta).sin_cos();
            v -= kf * kf * (self.a(k) * c + self.b(k) * s);
        }
        v
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.cos.iter().chain(&self.sin).fold(self.a0.abs(), |m, c| m.max(c.abs()))
    }

    fn is_finite(&self) -> bool {
        self.a0.is_finite() && self.cos.iter().chain(&self.sin).all(|c| c.is_finite())
    }
}

/// Prescribed boundary heights for a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryProfile {
    /// Raised-cosine arch along x1, vanishing at `x1 = +-l/2`.
    Arch { h_arch: f64 },
    Disk { series: FourierSeries },
    Annulus { outer: FourierSeries, inner: FourierSeries },
}

impl BoundaryProfile {
    pub fn validate_for(&self, domain: &DomainSpec) -> Result<()> {
        let ok = match (self, domain) {
            (BoundaryProfile::Arch { h_arch }, DomainSpec::Rectangle { .. }) => h_arch.is_finite(),
            (BoundaryProfile::Disk { series }, DomainSpec::Disk { .. }) => series.is_finite(),
            (BoundaryProfile::Annulus { outer, inner }, DomainSpec::Annulus { .. }) => {
                outer.is_finite() && inner.is_finite()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(MeaError::Config(format!("boundary profile {self:?} does not fit domain {domain:?}")))
        }
    }

    /// Default illustrative leg profiles; the amplitudes are not taken from any measured shell.
    pub fn four_leg_demo() -> Self {
        BoundaryProfile::Disk { series: FourierSeries::cosine(1.0, 4, 1.0) }
    }

    pub fn three_leg_demo() -> Self {
        BoundaryProfile::Annulus { outer: FourierSeries::cosine(1.0, 3, 1.0), inner: FourierSeries::constant(2.5) }
    }

    /// The series whose curvature drives boundary enrichment: the disk profile, or the
    /// outer profile of an annulus.
    pub fn enrichment_series(&self) -> Option<&FourierSeries> {
        match self {
            BoundaryProfile::Arch { .. } => None,
            BoundaryProfile::Disk { series } => Some(series),
            BoundaryProfile::Annulus { outer, .. } => Some(outer),
        }
    }
}

/// Raised-cosine arch `h/2 (1 + cos(pi x1 / (l/2)))`.
pub fn arch_height(h_arch: f64, l: f64, x1: f64) -> f64 {
    0.5 * h_arch * (1.0 + (PI * x1 / (0.5 * l)).cos())
}

/// Prescribed height at a boundary location.
pub fn boundary_height(domain: &DomainSpec, profile: &BoundaryProfile, param: BoundaryParam) -> f64 {
    match (domain, profile) {
        (DomainSpec::Rectangle { l, .. }, BoundaryProfile::Arch { h_arch }) => {
            arch_height(*h_arch, *l, domain.boundary_point(param).x1)
        }
        (_, BoundaryProfile::Disk { series }) => series.eval(param.t),
        (_, BoundaryProfile::Annulus { outer, inner }) => {
            if param.inner {
                inner.eval(param.t)
            } else {
                outer.eval(param.t)
            }
        }
        (_, BoundaryProfile::Arch { h_arch }) => {
            // Arch on a circular domain: evaluate at the point's x1 over the diameter.
            let p = domain.boundary_point(param);
            arch_height(*h_arch, domain.characteristic_size(), p.x1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudTag {
    Interior,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub tag: CloudTag,
    pub points: Vec<Point>,
    /// Filled for boundary clouds only, parallel to `points`.
    pub params: Vec<BoundaryParam>,
}

impl PointCloud {
    pub fn interior(points: Vec<Point>) -> Self {
        Self { tag: CloudTag::Interior, points, params: Vec::new() }
    }

    pub fn boundary(domain: &DomainSpec, params: Vec<BoundaryParam>) -> Self {
        let points = params.iter().map(|&p| domain.boundary_point(p)).collect();
        Self { tag: CloudTag::Boundary, points, params }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends another cloud with the same tag.
    pub fn extend(&mut self, other: PointCloud) {
        debug_assert_eq!(self.tag, other.tag);
        self.points.extend(other.points);
        self.params.extend(other.params);
    }

    /// CSV with columns `x1,x2,tag,param`; annulus inner-circle points get tag `boundary_inner`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x1,x2,tag,param")?;
        for (i, p) in self.points.iter().enumerate() {
            match self.tag {
                CloudTag::Interior => writeln!(w, "{},{},interior,", p.x1, p.x2)?,
                CloudTag::Boundary => {
                    let bp = self.params[i];
                    let tag = if bp.inner { "boundary_inner" } else { "boundary" };
                    writeln!(w, "{},{},{},{}", p.x1, p.x2, tag, bp.t)?;
                }
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. points uniformly over the area of the domain.
pub fn sample_interior<R: Rng + ?Sized>(domain: &DomainSpec, n: usize, rng: &mut R) -> Result<PointCloud> {
    domain.validate()?;
    let mut points = Vec::with_capacity(n);
    match *domain {
        DomainSpec::Rectangle { l, b } => {
            while points.len() < n {
                let p = Point::new((rng.gen::<f64>() - 0.5) * l, (rng.gen::<f64>() - 0.5) * b);
                // gen() may return exactly 0, which lands on the edge.
                if domain.contains(p) {
                    points.push(p);
                }
            }
        }
        DomainSpec::Disk { radius } => {
            while points.len() < n {
                let r = radius * rng.gen::<f64>().sqrt();
                let theta = TAU * rng.gen::<f64>();
                let p = Point::new(r * theta.cos(), r * theta.sin());
                if domain.contains(p) {
                    points.push(p);
                }
            }
        }
        DomainSpec::Annulus { r_out, .. } => {
            let max_draws = n.saturating_mul(1000).max(1000);
            let mut draws = 0usize;
            while points.len() < n {
                if draws >= max_draws {
                    return Err(MeaError::Sampling(format!(
                        "rejection sampling accepted {} of {draws} draws",
                        points.len()
                    )));
                }
                draws += 1;
                let p = Point::new((2.0 * rng.gen::<f64>() - 1.0) * r_out, (2.0 * rng.gen::<f64>() - 1.0) * r_out);
                if domain.contains(p) {
                    points.push(p);
                }
            }
        }
    }
    Ok(PointCloud::interior(points))
}

/// Draws `n` boundary points uniform in arc length. On the annulus each point picks
/// its circle with probability proportional to circumference.
pub fn sample_boundary_uniform<R: Rng + ?Sized>(domain: &DomainSpec, n: usize, rng: &mut R) -> Result<PointCloud> {
    domain.validate()?;
    let params = match *domain {
        DomainSpec::Rectangle { .. } => {
            let perim = domain.perimeter();
            (0..n).map(|_| BoundaryParam::outer(perim * rng.gen::<f64>())).collect()
        }
        DomainSpec::Disk { .. } => (0..n).map(|_| BoundaryParam::outer(TAU * rng.gen::<f64>())).collect(),
        DomainSpec::Annulus { r_in, r_out } => {
            let p_inner = r_in / (r_in + r_out);
            (0..n)
                .map(|_| {
                    let inner = rng.gen::<f64>() < p_inner;
                    BoundaryParam { t: TAU * rng.gen::<f64>(), inner }
                })
                .collect()
        }
    };
    Ok(PointCloud::boundary(domain, params))
}

/// Tabulated inverse-CDF for the density `p(theta) ∝ 1 + |kappa(theta)| / max|kappa|`.
#[derive(Clone, Debug)]
pub struct CurvatureDensity {
    /// Normalized CDF on the grid nodes `theta_i = 2 pi i / CURVATURE_GRID`.
    cdf: Vec<f64>,
    uniform: bool,
}

impl CurvatureDensity {
    pub fn new(series: &FourierSeries) -> Self {
        let m = CURVATURE_GRID;
        let h = TAU / m as f64;
        let kappa: Vec<f64> = (0..=m).map(|i| series.curvature(i as f64 * h).abs()).collect();
        let kmax = kappa.iter().cloned().fold(0.0, f64::max);
        if kmax == 0.0 {
            let cdf = (0..=m).map(|i| i as f64 / m as f64).collect();
            return Self { cdf, uniform: true };
        }
        let dens: Vec<f64> = kappa.iter().map(|k| 1.0 + k / kmax).collect();
        let mut cdf = Vec::with_capacity(m + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..m {
            acc += 0.5 * (dens[i] + dens[i + 1]) * h;
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        Self { cdf, uniform: false }
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Maps a uniform variate in [0,1) to an angle in [0, 2 pi).
    pub fn invert(&self, u: f64) -> f64 {
        let m = self.cdf.len() - 1;
        let h = TAU / m as f64;
        let i = match self.cdf.binary_search_by(|c| c.partial_cmp(&u).expect("finite cdf")) {
            Ok(i) => return (i.min(m - 1)) as f64 * h,
            Err(i) => i.clamp(1, m) - 1,
        };
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (i as f64 + frac) * h
    }
}

/// Boundary enrichment points drawn from the curvature-weighted density of the profile
/// (outer circle for the annulus). Falls back to uniform angles for a flat profile.
pub fn sample_boundary_curvature<R: Rng + ?Sized>(
    domain: &DomainSpec,
    profile: &BoundaryProfile,
    n: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    domain.validate()?;
    profile.validate_for(domain)?;
    let series = profile
        .enrichment_series()
        .filter(|_| domain.is_circular())
        .ok_or_else(|| MeaError::InvalidDomain("curvature enrichment needs a disk or annulus".into()))?;
    let density = CurvatureDensity::new(series);
    let params = (0..n).map(|_| BoundaryParam::outer(density.invert(rng.gen::<f64>()))).collect();
    Ok(PointCloud::boundary(domain, params))
}
