//! Second-order finite differences for the membrane equation on a rectangle.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::banded::BandMatrix;
use crate::error::{MeaError, Result};
use crate::geometry::{arch_height, BoundaryProfile, DomainSpec, Point};
use crate::residual::{CoefficientField, PdeCoefficients};

/// Nodal solution on a uniform `nx x ny` grid covering `[-l/2, l/2] x [-b/2, b/2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub l: f64,
    pub b: f64,
    pub nx: usize,
    pub ny: usize,
    /// `values[i * ny + j]` at `(x1_i, x2_j)`.
    pub values: Vec<f64>,
    /// `|A f - rhs| / |rhs|` of the solved system.
    pub relative_residual: f64,
}

impl GridSolution {
    pub fn hx(&self) -> f64 {
        self.l / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        self.b / (self.ny - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(-0.5 * self.l + i as f64 * self.hx(), -0.5 * self.b + j as f64 * self.hy())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }

    fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Interior nodes and their values.
    pub fn interior_nodes(&self) -> (Vec<Point>, Vec<f64>) {
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for i in 1..self.nx - 1 {
            for j in 1..self.ny - 1 {
                pts.push(self.node(i, j));
                vals.push(self.value(i, j));
            }
        }
        (pts, vals)
    }

    /// All nodes including the boundary.
    pub fn nodes(&self) -> (Vec<Point>, Vec<f64>) {
        let pts = (0..self.nx).flat_map(|i| (0..self.ny).map(move |j| (i, j))).map(|(i, j)| self.node(i, j)).collect();
        (pts, self.values.clone())
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        let u = (p.x1 + 0.5 * self.l) / self.hx();
        let v = (p.x2 + 0.5 * self.b) / self.hy();
        let eps = 1e-9;
        if !(u >= -eps && v >= -eps && u <= (self.nx - 1) as f64 + eps && v <= (self.ny - 1) as f64 + eps) {
            return None;
        }
        let i = (u.floor().max(0.0) as usize).min(self.nx - 2);
        let j = (v.floor().max(0.0) as usize).min(self.ny - 2);
        let (s, t) = (u - i as f64, v - j as f64);
        Some(
            (1.0 - s) * (1.0 - t) * self.value(i, j)
                + s * (1.0 - t) * self.value(i + 1, j)
                + (1.0 - s) * t * self.value(i, j + 1)
                + s * t * self.value(i + 1, j + 1),
        )
    }

    /// CSV with columns `x1,x2,f`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x1,x2,f")?;
        for i in 0..self.nx {
            for j in 0..self.ny {
                let p = self.node(i, j);
                writeln!(w, "{},{},{}", p.x1, p.x2, self.value(i, j))?;
            }
        }
        Ok(())
    }
}

/// Grid-refinement estimate of the discretization error of a coarse solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RichardsonEstimate {
    pub fine_nx: usize,
    pub fine_ny: usize,
    /// Estimated relative L2 error of the coarse solution over its interior nodes.
    pub relative_l2: f64,
}

/// Applies the difference operator to nodal values at interior node `(i, j)`.
pub fn fd_operator(c: &PdeCoefficients, f: &dyn Fn(isize, isize) -> f64, hx: f64, hy: f64) -> f64 {
    let f0 = f(0, 0);
    let f11 = (f(1, 0) - 2.0 * f0 + f(-1, 0)) / (hx * hx);
    let f22 = (f(0, 1) - 2.0 * f0 + f(0, -1)) / (hy * hy);
    let f12 = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4.0 * hx * hy);
    let f1 = (f(1, 0) - f(-1, 0)) / (2.0 * hx);
    let f2 = (f(0, 1) - f(0, -1)) / (2.0 * hy);
    c.s22 * f11 + c.s11 * f22 + 2.0 * c.s12 * f12 - c.p1 * f1 - c.p2 * f2
}

/// Solves with arbitrary Dirichlet data `boundary(p)`.
pub fn fd_solve_rectangle_with(
    ctx: &dyn CoefficientField,
    l: f64,
    b: f64,
    boundary: &dyn Fn(Point) -> f64,
    nx: usize,
    ny: usize,
) -> Result<GridSolution> {
    DomainSpec::Rectangle { l, b }.validate()?;
    if nx < 5 || ny < 5 {
        return Err(MeaError::Config(format!("grid {nx} x {ny} is too coarse; need at least 5 x 5")));
    }
    let mut sol = GridSolution { l, b, nx, ny, values: vec![0.0; nx * ny], relative_residual: 0.0 };
    let (hx, hy) = (sol.hx(), sol.hy());
    let n = nx * ny;
    let band = ny + 1;
    let mut a = BandMatrix::zeros(n, band, band);
    let mut rhs = vec![0.0; n];
    let mut worst: Option<(f64, Point)> = None;
    for i in 0..nx {
        for j in 0..ny {
            let row = i * ny + j;
            let p = sol.node(i, j);
            if sol.is_boundary(i, j) {
                a.add(row, row, 1.0);
                rhs[row] = boundary(p);
                continue;
            }
            let c = ctx.coefficients(p);
            let det = c.s11 * c.s22 - c.s12 * c.s12;
            if worst.map_or(true, |(d, _)| det < d) {
                worst = Some((det, p));
            }
            let (cx, cy, cxy) = (c.s22 / (hx * hx), c.s11 / (hy * hy), 2.0 * c.s12 / (4.0 * hx * hy));
            let (d1, d2) = (c.p1 / (2.0 * hx), c.p2 / (2.0 * hy));
            let at = |di: isize, dj: isize| ((i as isize + di) as usize) * ny + (j as isize + dj) as usize;
            a.add(row, row, -2.0 * cx - 2.0 * cy);
            a.add(row, at(1, 0), cx - d1);
            a.add(row, at(-1, 0), cx + d1);
            a.add(row, at(0, 1), cy - d2);
            a.add(row, at(0, -1), cy + d2);
            a.add(row, at(1, 1), cxy);
            a.add(row, at(-1, -1), cxy);
            a.add(row, at(1, -1), -cxy);
            a.add(row, at(-1, 1), -cxy);
            rhs[row] = c.q;
        }
    }
    if let Some((det, p)) = worst.filter(|(d, _)| *d <= 0.0) {
        return Err(MeaError::LinearSolve(format!(
            "projected stresses lose definiteness (det = {det:e}) at ({}, {}); the equation is not elliptic there",
            p.x1, p.x2
        )));
    }
    let lu = a.clone().factorize()?;
    let mut x = lu.solve(&rhs);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rhs_norm = norm(&rhs).max(f64::MIN_POSITIVE);
    let mut residual: Vec<f64> = a.mul(&x).iter().zip(&rhs).map(|(p, q)| p - q).collect();
    // One step of iterative refinement.
    let dx = lu.solve(&residual);
    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi -= d);
    residual = a.mul(&x).iter().zip(&rhs).map(|(p, q)| p - q).collect();
    sol.relative_residual = norm(&residual) / rhs_norm;
    if !(sol.relative_residual <= 1e-10) {
        return Err(MeaError::LinearSolve(format!("relative residual {:e} above 1e-10", sol.relative_residual)));
    }
    for i in 0..nx {
        for j in 0..ny {
            if sol.is_boundary(i, j) {
                // exact boundary data, untouched by roundoff
                x[i * ny + j] = rhs[i * ny + j];
            }
        }
    }
    sol.values = x;
    Ok(sol)
}

/// Solves on the rectangle with the arch boundary profile.
pub fn fd_solve_rectangle(
    ctx: &dyn CoefficientField,
    domain: &DomainSpec,
    profile: &BoundaryProfile,
    nx: usize,
    ny: usize,
) -> Result<GridSolution> {
    match (domain, profile) {
        (DomainSpec::Rectangle { l, b }, BoundaryProfile::Arch { h_arch }) => {
            let (l, h) = (*l, *h_arch);
            fd_solve_rectangle_with(ctx, l, *b, &|p| arch_height(h, l, p.x1), nx, ny)
        }
        _ => Err(MeaError::Config("the finite-difference reference needs a rectangle with an arch profile".into())),
    }
}

/// Solves on `nx x ny` and on the grid refined by two, and estimates the coarse error
/// as `4/3 |f_coarse - f_fine|` over the shared interior nodes.
pub fn fd_solve_with_estimate(
    ctx: &dyn CoefficientField,
    domain: &DomainSpec,
    profile: &BoundaryProfile,
    nx: usize,
    ny: usize,
) -> Result<(GridSolution, RichardsonEstimate)> {
    let coarse = fd_solve_rectangle(ctx, domain, profile, nx, ny)?;
    let (fnx, fny) = (2 * nx - 1, 2 * ny - 1);
    let fine = fd_solve_rectangle(ctx, domain, profile, fnx, fny)?;
    let (mut diff2, mut ref2) = (0.0, 0.0);
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            let f = fine.value(2 * i, 2 * j);
            diff2 += (coarse.value(i, j) - f).powi(2);
            ref2 += f * f;
        }
    }
    let relative_l2 = if ref2 > 0.0 { 4.0 / 3.0 * (diff2 / ref2).sqrt() } else { 0.0 };
    Ok((coarse, RichardsonEstimate { fine_nx: fnx, fine_ny: fny, relative_l2 }))
}
