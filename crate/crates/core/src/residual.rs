//! Second-order jets and the equilibrium residual
//! `S11 f,22 + S22 f,11 + 2 S12 f,12 - p1 f,1 - p2 f,2 - q`.

use std::io::Write;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{Point, PointCloud};
use crate::mea::MeaContext;

/// Value with first and second partial derivatives in `(x1, x2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub f11: f64,
    pub f12: f64,
    pub f22: f64,
}

impl Jet {
    pub const fn constant(f: f64) -> Self {
        Self { f, f1: 0.0, f2: 0.0, f11: 0.0, f12: 0.0, f22: 0.0 }
    }

    pub const fn x1(v: f64) -> Self {
        Self { f: v, f1: 1.0, f2: 0.0, f11: 0.0, f12: 0.0, f22: 0.0 }
    }

    pub const fn x2(v: f64) -> Self {
        Self { f: v, f1: 0.0, f2: 1.0, f11: 0.0, f12: 0.0, f22: 0.0 }
    }

    /// Coordinate jets `(x1, x2)` at a point.
    pub fn coords(p: Point) -> (Self, Self) {
        (Self::x1(p.x1), Self::x2(p.x2))
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.f, self.f1, self.f2, self.f11, self.f12, self.f22]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { f: a[0], f1: a[1], f2: a[2], f11: a[3], f12: a[4], f22: a[5] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn scale(self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * s))
    }

    /// Composition with a scalar function given its value and first two derivatives at `self.f`.
    pub fn chain(self, g: f64, dg: f64, d2g: f64) -> Self {
        Self {
            f: g,
            f1: dg * self.f1,
            f2: dg * self.f2,
            f11: d2g * self.f1 * self.f1 + dg * self.f11,
            f12: d2g * self.f1 * self.f2 + dg * self.f12,
            f22: d2g * self.f2 * self.f2 + dg * self.f22,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.f.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.f.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.f.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let inv = 1.0 / self.f;
        self.chain(self.f.ln(), inv, -inv * inv)
    }

    pub fn sqrt(self) -> Self {
        let s = self.f.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.f))
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => self,
            _ => {
                let nf = n as f64;
                self.chain(self.f.powi(n), nf * self.f.powi(n - 1), nf * (nf - 1.0) * self.f.powi(n - 2))
            }
        }
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.f;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    pub fn laplacian(&self) -> f64 {
        self.f11 + self.f22
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            f: self.f + o.f,
            f1: self.f1 + o.f1,
            f2: self.f2 + o.f2,
            f11: self.f11 + o.f11,
            f12: self.f12 + o.f12,
            f22: self.f22 + o.f22,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            f: self.f * o.f,
            f1: self.f1 * o.f + self.f * o.f1,
            f2: self.f2 * o.f + self.f * o.f2,
            f11: self.f11 * o.f + 2.0 * self.f1 * o.f1 + self.f * o.f11,
            f12: self.f12 * o.f + self.f1 * o.f2 + self.f2 * o.f1 + self.f * o.f12,
            f22: self.f22 * o.f + 2.0 * self.f2 * o.f2 + self.f * o.f22,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.f += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.f -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

/// PDE coefficients at a point: projected stresses, horizontal and vertical loads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PdeCoefficients {
    pub s11: f64,
    pub s22: f64,
    pub s12: f64,
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
}

impl PdeCoefficients {
    /// Partial derivatives of the residual with respect to the jet entries
    /// `(f, f1, f2, f11, f12, f22)`.
    pub fn residual_slope(&self) -> [f64; 6] {
        [0.0, -self.p1, -self.p2, self.s22, 2.0 * self.s12, self.s11]
    }
}

/// Source of PDE coefficients over the plan.
pub trait CoefficientField {
    fn coefficients(&self, p: Point) -> PdeCoefficients;
}

impl CoefficientField for MeaContext {
    fn coefficients(&self, p: Point) -> PdeCoefficients {
        MeaContext::coefficients(self, p)
    }
}

/// A surface `f(x1, x2)` that can report its second-order jet.
pub trait SurfaceField {
    fn jet(&self, p: Point) -> Result<Jet>;

    fn value(&self, p: Point) -> Result<f64> {
        Ok(self.jet(p)?.f)
    }

    fn jets(&self, points: &[Point]) -> Result<Vec<Jet>> {
        points.iter().map(|&p| self.jet(p)).collect()
    }

    fn values(&self, points: &[Point]) -> Result<Vec<f64>> {
        points.iter().map(|&p| self.value(p)).collect()
    }
}

pub fn pde_residual(jet: &Jet, c: &PdeCoefficients) -> f64 {
    c.s11 * jet.f22 + c.s22 * jet.f11 + 2.0 * c.s12 * jet.f12 - c.p1 * jet.f1 - c.p2 * jet.f2 - c.q
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub point: Point,
    pub r: f64,
    pub coefficients: PdeCoefficients,
}

impl ResidualSample {
    pub fn recompute(&self, jet: &Jet) -> f64 {
        pde_residual(jet, &self.coefficients)
    }
}

/// Pairwise summation; the reduction tree depends only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn residual_samples<F, C>(field: &F, ctx: &C, points: &[Point]) -> Result<Vec<ResidualSample>>
where
    F: SurfaceField + ?Sized,
    C: CoefficientField + ?Sized,
{
    let jets = field.jets(points)?;
    Ok(points
        .iter()
        .zip(&jets)
        .map(|(&p, j)| {
            let c = ctx.coefficients(p);
            ResidualSample { point: p, r: pde_residual(j, &c), coefficients: c }
        })
        .collect())
}

/// Root-mean-square PDE residual over an interior cloud; its square is the PDE loss.
pub fn residual_rmse<F, C>(field: &F, ctx: &C, cloud: &PointCloud) -> Result<f64>
where
    F: SurfaceField + ?Sized,
    C: CoefficientField + ?Sized,
{
    if cloud.is_empty() {
        return Err(MeaError::EmptyCloud);
    }
    let sq: Vec<f64> = residual_samples(field, ctx, &cloud.points)?.iter().map(|s| s.r * s.r).collect();
    Ok((pairwise_sum(&sq) / sq.len() as f64).sqrt())
}

/// CSV with columns `x1,x2,r`.
pub fn write_residual_csv<W: Write>(samples: &[ResidualSample], mut w: W) -> Result<()> {
    writeln!(w, "x1,x2,r")?;
    for s in samples {
        writeln!(w, "{},{},{}", s.point.x1, s.point.x2, s.r)?;
    }
    Ok(())
}
