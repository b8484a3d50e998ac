//! Relative loss balancing with random lookback.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelobraloConfig {
    pub alpha: f64,
    pub rho: f64,
    pub tau: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-12
}

impl Default for RelobraloConfig {
    fn default() -> Self {
        Self { alpha: 0.999, rho: 0.8, tau: 2.0, eps: 1e-12 }
    }
}

impl RelobraloConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.alpha) || !unit(self.rho) || !(self.tau > 0.0) || !(self.eps >= 0.0) {
            return Err(MeaError::Config(format!("invalid loss-balancing parameters {self:?}")));
        }
        Ok(())
    }
}

/// `n softmax(L(t) / (tau L(t') + eps))`
pub fn balancing_weights(loss_now: &[f64], loss_then: &[f64], tau: f64, eps: f64) -> Vec<f64> {
    let z: Vec<f64> = loss_now.iter().zip(loss_then).map(|(a, b)| a / (tau * b + eps)).collect();
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
    let sum: f64 = e.iter().sum();
    let n = loss_now.len() as f64;
    e.iter().map(|v| n * v / sum).collect()
}

/// One weight update. The lookback epoch is the previous one with probability `rho`,
/// otherwise the first epoch.
pub fn relobralo_update<R: Rng + ?Sized>(
    cfg: &RelobraloConfig,
    prev_weights: &[f64],
    loss_now: &[f64],
    loss_prev: &[f64],
    loss_ref: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = prev_weights.len();
    assert!(loss_now.len() == n && loss_prev.len() == n && loss_ref.len() == n);
    for v in [loss_now, loss_prev, loss_ref] {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, &l)| !(l > 0.0) || !l.is_finite()) {
            return Err(MeaError::NonPositiveLoss { index, value });
        }
    }
    let lookback = if rng.gen_bool(cfg.rho) { loss_prev } else { loss_ref };
    let tentative = balancing_weights(loss_now, lookback, cfg.tau, cfg.eps);
    Ok(prev_weights.iter().zip(&tentative).map(|(p, w)| cfg.alpha * p + (1.0 - cfg.alpha) * w).collect())
}
