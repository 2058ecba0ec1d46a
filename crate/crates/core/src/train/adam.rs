use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{Gradients, Parameters};

/// Bias-corrected Adam moments for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        Self {
            first_moment: zeros(),
            second_moment: zeros(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update of every trainable parameter. Frozen parameters are
/// skipped; a trainable parameter without a gradient is an error.
pub fn adam_step(params: &mut Parameters, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::State(format!(
            "{} gradients / {} moment slots for {} parameters",
            grads.len(),
            state.first_moment.len(),
            params.len()
        )));
    }
    // Check everything before mutating anything.
    for (idx, g) in grads.iter().enumerate() {
        let p = params.param(idx);
        if !p.frozen && g.as_ref().is_none_or(|g| g.len() != p.tensor.numel()) {
            return Err(Error::State(format!("missing gradient for {:?}", p.name)));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(state.beta1, t);
    let c2 = 1.0 - libm::pow(state.beta2, t);
    for (idx, g) in grads.iter().enumerate() {
        let param = params.param_mut(idx);
        if param.frozen {
            continue;
        }
        let g = g.as_ref().expect("checked above");
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        for (((w, &gi), mi), vi) in param.tensor.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = state.beta1 * *mi + (1.0 - state.beta1) * gi;
            *vi = state.beta2 * *vi + (1.0 - state.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (libm::sqrt(v_hat) + state.eps);
        }
    }
    Ok(())
}
