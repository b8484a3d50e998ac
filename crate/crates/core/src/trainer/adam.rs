use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam update of `theta` in place.
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    assert_eq!(theta.len(), grad.len());
    assert_eq!(state.m.len(), grad.len());
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(MeaError::Divergence("non-finite gradient in Adam step".into()));
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 / (1.0 - b1.powi(state.step as i32));
    let c2 = 1.0 / (1.0 - b2.powi(state.step as i32));
    for (((t, g), m), v) in theta.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *t -= lr * (*m * c1) / ((*v * c2).sqrt() + state.eps);
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(MeaError::Divergence("non-finite parameters after Adam step".into()));
    }
    Ok(())
}
