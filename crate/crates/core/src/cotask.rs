//! Co-task aware feature sharing, pooling and sigmoid task heads.
//!
//! For tapped layer `l`, task `x` sees the shared representation
//!
//! ```text
//! r_x^l = Σ_y alpha[x][y] · beta[l][x][y] · h_y^l
//! ```
//!
//! where `alpha` (T×T) says how much task `y` contributes to task `x` and
//! `beta` (L'×T×T) refines that per layer. Each task then projects every
//! `r_x^l` through a shared sigmoid layer, averages over layers and applies
//! an independent sigmoid per class.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

pub const ALPHA: &str = "share.alpha";
pub const BETA: &str = "share.beta";

/// How the task streams exchange information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SharingStrategy {
    /// One tower per task, no exchange.
    #[serde(rename = "stl")]
    SingleTask,
    /// One tower feeding every task head.
    #[serde(rename = "hard")]
    HardShared,
    /// Per-task towers mixed by a learnable `alpha`; `beta` stays at ones.
    #[serde(rename = "cross-stitch")]
    CrossStitch,
    /// Per-task towers mixed by learnable `alpha` and `beta`.
    #[serde(rename = "cotask")]
    CoTaskAware,
}

impl SharingStrategy {
    pub const ALL: [SharingStrategy; 4] = [
        SharingStrategy::SingleTask,
        SharingStrategy::HardShared,
        SharingStrategy::CrossStitch,
        SharingStrategy::CoTaskAware,
    ];

    /// Short command-line name.
    pub fn as_str(self) -> &'static str {
        match self {
            SharingStrategy::SingleTask => "stl",
            SharingStrategy::HardShared => "hard",
            SharingStrategy::CrossStitch => "cross-stitch",
            SharingStrategy::CoTaskAware => "cotask",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown sharing strategy {s:?}")))
    }

    pub fn uses_sharing_factors(self) -> bool {
        matches!(self, SharingStrategy::CrossStitch | SharingStrategy::CoTaskAware)
    }

    pub fn num_towers(self, num_tasks: usize) -> usize {
        match self {
            SharingStrategy::HardShared => 1,
            _ => num_tasks,
        }
    }
}

impl core::fmt::Display for SharingStrategy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which tower feeds which coefficient in the two-task mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareForm {
    /// Every `alpha[x][y]·beta[l][x][y]` multiplies task `y`'s features.
    #[default]
    Symmetric,
    /// Two tasks only: the auxiliary row is applied with its feature
    /// sources swapped, `r_1 = a11·b11·h_0 + a10·b10·h_1`.
    Printed,
}

/// Per-task head parameter names: projection then classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskHeadNames {
    pub proj_weight: String,
    pub proj_bias: String,
    pub head_weight: String,
    pub head_bias: String,
}

impl TaskHeadNames {
    pub fn new(task: usize) -> Self {
        Self {
            proj_weight: format!("head{task}.proj.weight"),
            proj_bias: format!("head{task}.proj.bias"),
            head_weight: format!("head{task}.out.weight"),
            head_bias: format!("head{task}.out.bias"),
        }
    }
}

/// Tape variables of one task head.
#[derive(Debug, Clone, Copy)]
pub struct TaskHead {
    pub proj_weight: Var,
    pub proj_bias: Var,
    pub head_weight: Var,
    pub head_bias: Var,
}

/// Mixes the per-task features of tapped layer `layer`.
///
/// `features[y]` is task `y`'s `[batch, d]` state; returns one mixed tensor
/// per task. `alpha` is `[T, T]`, `beta` is `[L', T, T]`.
pub fn cotask_share(
    tape: &mut Tape,
    features: &[Var],
    alpha: Var,
    beta: Var,
    layer: usize,
    form: ShareForm,
) -> Result<Vec<Var>> {
    let t = features.len();
    if tape.shape(alpha) != [t, t] {
        return Err(Error::shape("cotask_share", tape.shape(alpha), &[t, t]));
    }
    let bs = tape.shape(beta).to_vec();
    if bs.len() != 3 || bs[1] != t || bs[2] != t || layer >= bs[0] {
        return Err(Error::shape("cotask_share", &bs, &[layer, t, t]));
    }
    if form == ShareForm::Printed && t != 2 {
        return Err(Error::config("the printed sharing form is defined for two tasks only"));
    }
    let fshape = tape.shape(features[0]).to_vec();
    for &f in features {
        if tape.shape(f) != fshape.as_slice() {
            return Err(Error::shape("cotask_share", &fshape, tape.shape(f)));
        }
    }
    let mut out = Vec::with_capacity(t);
    for x in 0..t {
        let mut acc: Option<Var> = None;
        for y in 0..t {
            let a = tape.select(alpha, x * t + y)?;
            let b = tape.select(beta, (layer * t + x) * t + y)?;
            let coef = tape.mul(a, b)?;
            let source = match form {
                ShareForm::Printed if x == 1 => 1 - y,
                _ => y,
            };
            let term = tape.scale_by(features[source], coef)?;
            acc = Some(match acc {
                Some(prev) => tape.add(prev, term)?,
                None => term,
            });
        }
        out.push(acc.expect("at least one task"));
    }
    Ok(out)
}

/// `z = mean_l sigmoid(W · r_l + b)` over the tapped layers.
pub fn pool_task_features(tape: &mut Tape, layers: &[Var], head: &TaskHead) -> Result<Var> {
    if layers.is_empty() {
        return Err(Error::Input("no layer features to pool".into()));
    }
    let mut projected = Vec::with_capacity(layers.len());
    for &r in layers {
        let y = tape.matmul_t(r, head.proj_weight)?;
        let y = tape.add_row(y, head.proj_bias)?;
        let y = tape.sigmoid(y);
        let mut shape = alloc::vec![1];
        shape.extend_from_slice(tape.shape(y));
        projected.push(tape.reshape(y, &shape)?);
    }
    let stacked = tape.concat(&projected, 0)?;
    tape.mean_axis(stacked, 0)
}

/// Independent per-class probabilities `sigmoid(W · z + b)`.
pub fn classify(tape: &mut Tape, z: Var, head: &TaskHead) -> Result<Var> {
    let logits = tape.matmul_t(z, head.head_weight)?;
    let logits = tape.add_row(logits, head.head_bias)?;
    Ok(tape.sigmoid(logits))
}

/// Indices of classes whose probability reaches `threshold`.
pub fn predict_labels(probs: &[f64], threshold: f64) -> Result<Vec<usize>> {
    check_threshold(threshold)?;
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(c, _)| c)
        .collect())
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("threshold {threshold} outside (0, 1)")))
    }
}
