//! Analytic versus finite-difference gradients of the multitask loss.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::loss::multitask_loss;
use super::{batch_of, gold_tensors};
use crate::autodiff::Tape;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::finite_diff::finite_difference_grad;
use crate::model::{Mode, Model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradTolerance {
    pub rel: f64,
    /// Coordinates whose absolute error is within this bound pass regardless
    /// of relative error.
    pub abs: f64,
}

impl Default for GradTolerance {
    fn default() -> Self {
        Self { rel: 1e-4, abs: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Largest relative error over coordinates with gradient magnitude above
    /// the absolute tolerance.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Parameter holding the worst coordinate, if any was compared.
    pub worst_param: Option<String>,
    pub checked_params: Vec<String>,
    pub num_coordinates: usize,
    pub passed: bool,
}

fn loss_value(model: &Model, samples: &[&Sample], weights: &[f64]) -> Result<(Tape, crate::autodiff::Var, crate::params::Bound)> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch_of(samples)?, Mode::Eval)?;
    let loss = multitask_loss(&mut tape, &out.probs, &gold_tensors(model, samples)?, weights)?;
    Ok((tape, loss, out.bound))
}

/// Compares tape gradients of the weighted multitask loss on `samples`
/// (dropout off) with central differences of step `eps`, for every trainable
/// parameter. Frozen parameters are skipped and left out of the report.
pub fn gradient_check(
    model: &Model,
    samples: &[Sample],
    weights: &[f64],
    eps: f64,
    tol: GradTolerance,
) -> Result<GradCheckReport> {
    if samples.is_empty() {
        return Err(Error::Input("gradient check needs at least one sample".into()));
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    let (mut tape, loss, bound) = loss_value(model, &refs, weights)?;
    tape.backward(loss)?;
    let analytic = model.params().collect_grads(&tape, &bound);
    drop(tape);

    let config = model.config().clone();
    let numeric = finite_difference_grad(
        |p| {
            let m = Model::from_parts(config.clone(), p.clone())?;
            let (tape, loss, _) = loss_value(&m, &refs, weights)?;
            Ok(tape.value(loss).item())
        },
        model.params(),
        eps,
    )?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_param: None,
        checked_params: Vec::new(),
        num_coordinates: 0,
        passed: true,
    };
    let mut worst = (false, -1.0);
    for (idx, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let param = model.params().param(idx);
        if param.frozen {
            continue;
        }
        let Some(n) = n else { continue };
        let zeros;
        let a = match a {
            Some(a) => a.as_slice(),
            // Parameter did not reach the loss.
            None => {
                zeros = alloc::vec![0.0; n.len()];
                zeros.as_slice()
            }
        };
        report.checked_params.push(param.name.clone());
        for (&ga, &gn) in a.iter().zip(n) {
            report.num_coordinates += 1;
            let abs = (ga - gn).abs();
            let scale = ga.abs().max(gn.abs());
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            let ok = abs <= tol.abs || rel <= tol.rel;
            report.passed &= ok;
            report.max_abs_err = report.max_abs_err.max(abs);
            if scale > tol.abs {
                report.max_rel_err = report.max_rel_err.max(rel);
            }
            let badness = (!ok, if scale > tol.abs { rel } else { 0.0 });
            if badness > worst {
                worst = badness;
                report.worst_param = Some(param.name.clone());
            }
        }
    }
    Ok(report)
}
