use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-12;

/// `Σ_t weights[t] · BCE(probs[t], gold[t])`, each BCE averaged over classes
/// and batch.
pub fn multitask_loss(tape: &mut Tape, probs: &[Var], gold: &[Tensor], weights: &[f64]) -> Result<Var> {
    if probs.len() != gold.len() || probs.len() != weights.len() || probs.is_empty() {
        return Err(Error::shape(
            "multitask_loss",
            &[probs.len(), gold.len()],
            &[weights.len()],
        ));
    }
    let mut total: Option<Var> = None;
    for ((&p, g), &w) in probs.iter().zip(gold).zip(weights) {
        let bce = tape.bce(p, g, BCE_EPS)?;
        let term = tape.scale(bce, w);
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("non-empty"))
}

/// `[batch, classes]` 0/1 target tensor.
pub fn targets(rows: &[&[bool]]) -> Result<Tensor> {
    let classes = rows.first().map_or(0, |r| r.len());
    let data: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect();
    Tensor::new(alloc::vec![rows.len(), classes], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn probs(t: &mut Tape, p: &[f64]) -> Var {
        t.leaf(Tensor::new(vec![1, p.len()], p.to_vec()).unwrap().with_requires_grad(true))
    }

    #[test]
    fn half_probability_costs_ln2() {
        let mut t = Tape::new();
        let p = probs(&mut t, &[0.5]);
        let q = probs(&mut t, &[0.5]);
        let g = targets(&[&[true]]).unwrap();
        let loss = multitask_loss(&mut t, &[p, q], &[g.clone(), g], &[0.7, 0.3]).unwrap();
        assert!((t.value(loss).item() - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_nearly_free() {
        let mut t = Tape::new();
        let p = probs(&mut t, &[1.0, 0.0]);
        let g = targets(&[&[true, false]]).unwrap();
        let loss = multitask_loss(&mut t, &[p], &[g], &[1.0]).unwrap();
        assert!(t.value(loss).item() <= 1e-11);
    }

    #[test]
    fn zero_aux_weight_leaves_primary_bce() {
        let mut t = Tape::new();
        let p = probs(&mut t, &[0.8, 0.3]);
        let q = probs(&mut t, &[0.01]);
        let gp = targets(&[&[true, false]]).unwrap();
        let ga = targets(&[&[true]]).unwrap();
        let joint = multitask_loss(&mut t, &[p, q], &[gp.clone(), ga], &[1.0, 0.0]).unwrap();
        let alone = t.bce(p, &gp, BCE_EPS).unwrap();
        assert_eq!(t.value(joint).item(), t.value(alone).item());
        let expected = -(libm::log(0.8) + libm::log(0.7)) / 2.0;
        assert!((t.value(alone).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn mismatched_targets_are_shape_errors() {
        let mut t = Tape::new();
        let p = probs(&mut t, &[0.5, 0.5]);
        let g = targets(&[&[true]]).unwrap();
        assert!(matches!(multitask_loss(&mut t, &[p], &[g], &[1.0]), Err(Error::Shape { .. })));
    }
}
