//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    pub initial_step: f64,
    pub max_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { history: 10, c1: 1e-4, c2: 0.9, initial_step: 1.0, max_evals: 25 }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(MeaError::Config(format!("Wolfe constants need 0 < c1 < c2 < 1, got {} and {}", self.c1, self.c2)));
        }
        if self.history == 0 || self.max_evals == 0 || !(self.initial_step > 0.0) {
            return Err(MeaError::Config("L-BFGS history, evaluation budget and step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LbfgsState {
    pub pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl LbfgsState {
    pub fn flush(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Outcome of one line search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchReport {
    pub step: f64,
    pub f0: f64,
    /// Directional derivative at the start.
    pub dg0: f64,
    pub f_new: f64,
    pub dg_new: f64,
    pub evaluations: usize,
    /// The strong Wolfe search failed and a backtracking steepest-descent step was taken.
    pub fallback: bool,
}

impl LineSearchReport {
    pub fn satisfies_strong_wolfe(&self, c1: f64, c2: f64) -> bool {
        let armijo = self.f_new <= self.f0 + c1 * self.step * self.dg0;
        let curvature = self.dg_new.abs() <= c2 * self.dg0.abs();
        armijo && curvature
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + alpha * d).collect()
}

/// Two-loop recursion: `-H g`.
fn search_direction(state: &LbfgsState, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(state.pairs.len());
    for (s, y) in state.pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = state.pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (a, rho)) in state.pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizer of the cubic through two points with slopes, or `None` when it is not defined.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

fn checked<F>(eval: &mut F, x: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (f, g) = eval(x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(MeaError::Divergence("non-finite objective during L-BFGS".into()));
    }
    Ok((f, g))
}

/// Strong Wolfe search along `d`; `None` when the evaluation budget runs out.
fn strong_wolfe<F>(cfg: &LbfgsConfig, x: &[f64], f0: f64, dg0: f64, d: &[f64], eval: &mut F, evals: &mut usize) -> Result<Option<Trial>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut try_at = |alpha: f64, evals: &mut usize| -> Result<Trial> {
        *evals += 1;
        let (f, g) = checked(eval, &axpy(x, alpha, d))?;
        let dg = dot(&g, d);
        Ok(Trial { alpha, f, g, dg })
    };
    let wolfe_curv = |t: &Trial| t.dg.abs() <= -cfg.c2 * dg0;
    let armijo = |t: &Trial| t.f <= f0 + cfg.c1 * t.alpha * dg0;

    let mut prev = Trial { alpha: 0.0, f: f0, g: Vec::new(), dg: dg0 };
    let mut alpha = cfg.initial_step;
    let (mut lo, mut hi);
    loop {
        if *evals >= cfg.max_evals {
            return Ok(None);
        }
        let t = try_at(alpha, evals)?;
        if !armijo(&t) || (prev.alpha > 0.0 && t.f >= prev.f) {
            lo = prev;
            hi = t;
            break;
        }
        if wolfe_curv(&t) {
            return Ok(Some(t));
        }
        if t.dg >= 0.0 {
            lo = t;
            hi = prev;
            break;
        }
        alpha *= 2.0;
        prev = t;
    }
    // zoom
    while *evals < cfg.max_evals {
        let (a, b) = (lo.alpha, hi.alpha);
        let width = (b - a).abs();
        let (left, right) = (a.min(b), a.max(b));
        let cand = cubic_min(a, lo.f, lo.dg, b, hi.f, hi.dg)
            .filter(|c| *c > left + 0.1 * width && *c < right - 0.1 * width)
            .unwrap_or(0.5 * (a + b));
        let t = try_at(cand, evals)?;
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if wolfe_curv(&t) {
                return Ok(Some(t));
            }
            if t.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
        if (hi.alpha - lo.alpha).abs() <= f64::EPSILON * lo.alpha.abs().max(1e-300) {
            break;
        }
    }
    Ok(None)
}

/// One L-BFGS iteration from `x` with objective `f` and gradient `g`. Returns the new
/// objective and gradient; `x` is updated in place.
pub fn lbfgs_step<F>(
    cfg: &LbfgsConfig,
    state: &mut LbfgsState,
    x: &mut Vec<f64>,
    f: f64,
    g: &[f64],
    mut eval: F,
) -> Result<(f64, Vec<f64>, LineSearchReport)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let gnorm2 = dot(g, g);
    if gnorm2 == 0.0 {
        let report = LineSearchReport { step: 0.0, f0: f, dg0: 0.0, f_new: f, dg_new: 0.0, evaluations: 0, fallback: false };
        return Ok((f, g.to_vec(), report));
    }
    let mut d = search_direction(state, g);
    let mut dg0 = dot(&d, g);
    if !(dg0 < 0.0) {
        state.flush();
        d = g.iter().map(|v| -v).collect();
        dg0 = -gnorm2;
    }
    let mut evals = 0;
    if let Some(t) = strong_wolfe(cfg, x, f, dg0, &d, &mut eval, &mut evals)? {
        let s: Vec<f64> = d.iter().map(|v| t.alpha * v).collect();
        let y: Vec<f64> = t.g.iter().zip(g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if state.pairs.len() == cfg.history {
                state.pairs.pop_front();
            }
            state.pairs.push_back((s, y));
        }
        *x = axpy(x, t.alpha, &d);
        let report = LineSearchReport { step: t.alpha, f0: f, dg0, f_new: t.f, dg_new: t.dg, evaluations: evals, fallback: false };
        return Ok((t.f, t.g, report));
    }

    // Steepest descent with Armijo backtracking.
    state.flush();
    let d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alpha = cfg.initial_step / gnorm2.sqrt().max(1.0);
    for _ in 0..60 {
        evals += 1;
        let xt = axpy(x, alpha, &d);
        let (ft, gt) = checked(&mut eval, &xt)?;
        if ft <= f - cfg.c1 * alpha * gnorm2 {
            *x = xt;
            let report =
                LineSearchReport { step: alpha, f0: f, dg0: -gnorm2, f_new: ft, dg_new: dot(&gt, &d), evaluations: evals, fallback: true };
            return Ok((ft, gt, report));
        }
        alpha *= 0.5;
    }
    let report = LineSearchReport { step: 0.0, f0: f, dg0: -gnorm2, f_new: f, dg_new: -gnorm2, evaluations: evals, fallback: true };
    Ok((f, g.to_vec(), report))
}
