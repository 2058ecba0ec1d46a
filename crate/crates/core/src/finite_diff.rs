//! Central finite differences, the independent oracle for tape gradients.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{Gradients, Parameters};

/// Central-difference gradient of `f` with respect to every trainable
/// coordinate of `params`. Frozen parameters yield `None`.
///
/// `f` is evaluated twice at the unperturbed point first; differing values
/// mean `f` is not deterministic and the oracle refuses to run.
pub fn finite_difference_grad<F>(mut f: F, params: &Parameters, eps: f64) -> Result<Gradients>
where
    F: FnMut(&Parameters) -> Result<f64>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config(format!("finite-difference step must be positive, got {eps}")));
    }
    let a = f(params)?;
    let b = f(params)?;
    if a.to_bits() != b.to_bits() {
        return Err(Error::Oracle(format!(
            "function is not deterministic: {a} vs {b} at the same point"
        )));
    }
    let mut work = params.clone();
    let mut grads = Vec::with_capacity(params.len());
    for idx in 0..params.len() {
        if params.param(idx).frozen {
            grads.push(None);
            continue;
        }
        let n = params.param(idx).tensor.numel();
        let mut g = Vec::with_capacity(n);
        for j in 0..n {
            let orig = params.param(idx).tensor.data()[j];
            work.param_mut(idx).tensor.data_mut()[j] = orig + eps;
            let fp = f(&work)?;
            work.param_mut(idx).tensor.data_mut()[j] = orig - eps;
            let fm = f(&work)?;
            work.param_mut(idx).tensor.data_mut()[j] = orig;
            g.push((fp - fm) / (2.0 * eps));
        }
        grads.push(Some(g));
    }
    Ok(grads)
}
