//! Precision, recall and F1 for multi-label predictions.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Number of gold positives.
    pub support: usize,
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    /// Per-class scores averaged with gold-support weights.
    pub weighted: Prf,
    pub micro: Prf,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn prf(tp: usize, fp: usize, fn_: usize) -> Prf {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

/// Scores predicted label sets against gold label sets over `num_classes`
/// classes. Undefined ratios (0/0) count as 0.
pub fn evaluate<P, G>(predictions: &[P], gold: &[G], num_classes: usize) -> Result<Metrics>
where
    P: AsRef<[usize]>,
    G: AsRef<[usize]>,
{
    if predictions.len() != gold.len() {
        return Err(Error::shape("evaluate", &[predictions.len()], &[gold.len()]));
    }
    let mut counts = vec![ClassMetrics::default(); num_classes];
    let mut seen = vec![(false, false); num_classes];
    for (pred, gold) in predictions.iter().zip(gold) {
        seen.iter_mut().for_each(|s| *s = (false, false));
        for &c in pred.as_ref() {
            let s = seen.get_mut(c).ok_or_else(|| Error::Schema(alloc::format!("class index {c}")))?;
            s.0 = true;
        }
        for &c in gold.as_ref() {
            let s = seen.get_mut(c).ok_or_else(|| Error::Schema(alloc::format!("class index {c}")))?;
            s.1 = true;
        }
        for (m, &(p, g)) in counts.iter_mut().zip(&seen) {
            match (p, g) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, true) => m.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut weighted = Prf::default();
    let total_support: usize = counts.iter().map(|m| m.tp + m.fn_).sum();
    for m in &mut counts {
        m.support = m.tp + m.fn_;
        m.prf = prf(m.tp, m.fp, m.fn_);
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        if total_support > 0 {
            let w = m.support as f64 / total_support as f64;
            weighted.precision += w * m.prf.precision;
            weighted.recall += w * m.prf.recall;
            weighted.f1 += w * m.prf.f1;
        }
    }
    Ok(Metrics {
        per_class: counts,
        weighted,
        micro: prf(tp, fp, fn_),
    })
}

/// Converts a multi-hot vector to a label index set.
pub fn label_set(multi_hot: &[bool]) -> Vec<usize> {
    multi_hot.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

/// Fraction of equal entries.
pub fn accuracy(predictions: &[bool], gold: &[bool]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::shape("accuracy", &[predictions.len()], &[gold.len()]));
    }
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(ratio(hits, gold.len()))
}
