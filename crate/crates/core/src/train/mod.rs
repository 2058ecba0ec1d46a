//! Joint training, threshold selection, gradient checking and transfer.

mod adam;
mod gradcheck;
mod loss;
mod transfer;

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{Sample, DEFAULT_SPLIT};
use crate::encoder::TokenBatch;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, label_set, Metrics};
use crate::model::{Mode, Model};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport, GradTolerance};
pub use loss::{multitask_loss, targets, BCE_EPS};
pub use transfer::{binary_accuracy, finetune, transfer_finetune, transfer_init, TransferOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout_p: f64,
    pub loss_weight_primary: f64,
    pub loss_weight_aux: f64,
    pub seed: u64,
    pub threshold_grid: Vec<f64>,
    pub split_ratios: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-4,
            dropout_p: 0.5,
            loss_weight_primary: 0.7,
            loss_weight_aux: 0.3,
            seed: 0,
            threshold_grid: default_threshold_grid(),
            split_ratios: DEFAULT_SPLIT,
        }
    }
}

/// 0.05, 0.10, …, 0.95.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..20).map(|i| f64::from(i) / 20.0).collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        if !(self.loss_weight_primary >= 0.0 && self.loss_weight_aux >= 0.0) {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if self.threshold_grid.is_empty() || self.threshold_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::config("threshold_grid must be a non-empty list inside (0, 1)"));
        }
        Ok(())
    }

    /// Loss weight per task: the configured pair for two tasks, `[1]` for a
    /// single task.
    pub fn task_weights(&self, num_tasks: usize) -> Result<Vec<f64>> {
        match num_tasks {
            1 => Ok(alloc::vec![1.0]),
            2 => Ok(alloc::vec![self.loss_weight_primary, self.loss_weight_aux]),
            n => Err(Error::config(format!("no loss weights configured for {n} tasks"))),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective over the epoch's mini-batches (dropout on).
    pub train_loss: f64,
    /// Primary-task weighted F1 on the dev set at `threshold`; `None`
    /// without a dev set.
    pub dev_weighted_f1: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub threshold: f64,
}

fn check_schema(model: &Model, samples: &[Sample]) -> Result<()> {
    let tasks = &model.config().tasks;
    for s in samples {
        if s.labels.len() != tasks.len() || s.labels.iter().zip(tasks).any(|(l, t)| l.len() != t.num_classes) {
            return Err(Error::config("sample labels do not match the model's task schema"));
        }
    }
    Ok(())
}

fn gold_tensors(model: &Model, samples: &[&Sample]) -> Result<Vec<Tensor>> {
    (0..model.config().num_tasks())
        .map(|t| {
            let rows: Vec<&[bool]> = samples.iter().map(|s| s.labels[t].as_slice()).collect();
            targets(&rows)
        })
        .collect()
}

fn batch_of(samples: &[&Sample]) -> Result<TokenBatch> {
    let seqs: Vec<&[usize]> = samples.iter().map(|s| s.tokens.as_slice()).collect();
    TokenBatch::from_sequences(&seqs)
}

/// Mean multitask loss over `samples` in inference mode.
pub fn dataset_loss(model: &Model, samples: &[Sample], weights: &[f64], chunk: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let mut order: Vec<&Sample> = samples.iter().collect();
    order.sort_by_key(|s| s.tokens.len());
    let mut total = 0.0;
    for refs in order.chunks(chunk.max(1)) {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch_of(refs)?, Mode::Eval)?;
        let loss = multitask_loss(&mut tape, &out.probs, &gold_tensors(model, refs)?, weights)?;
        total += tape.value(loss).item() * refs.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Inference probabilities `[task][example][class]`, computed in chunks of
/// similar sequence length.
pub fn predict_dataset(model: &Model, samples: &[Sample], chunk: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| samples[i].tokens.len());
    let mut out: Vec<Vec<Vec<f64>>> = alloc::vec![alloc::vec![Vec::new(); samples.len()]; model.config().num_tasks()];
    for part in order.chunks(chunk.max(1)) {
        let seqs: Vec<&[usize]> = part.iter().map(|&i| samples[i].tokens.as_slice()).collect();
        let probs = model.predict_proba(&TokenBatch::from_sequences(&seqs)?)?;
        for (dst, src) in out.iter_mut().zip(probs) {
            for (&i, row) in part.iter().zip(src) {
                dst[i] = row;
            }
        }
    }
    Ok(out)
}

/// Scores thresholded predictions of one task.
pub fn evaluate_task(probs: &[Vec<f64>], gold: &[&[bool]], threshold: f64) -> Result<Metrics> {
    let classes = gold.first().map_or(0, |g| g.len());
    let preds = probs
        .iter()
        .map(|p| crate::cotask::predict_labels(p, threshold))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<Vec<usize>> = gold.iter().map(|g| label_set(g)).collect();
    evaluate(&preds, &gold, classes)
}

/// Grid value maximising weighted F1; ties go to the smaller threshold.
/// Returns `(threshold, weighted_f1)`.
pub fn select_threshold_from_probs(probs: &[Vec<f64>], gold: &[&[bool]], grid: &[f64]) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::config("empty threshold grid"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for &t in &sorted {
        let f1 = evaluate_task(probs, gold, t)?.weighted.f1;
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}

/// Picks the primary-task threshold on `dev`. Returns `(threshold, f1)`.
pub fn select_threshold(model: &Model, dev: &[Sample], grid: &[f64]) -> Result<(f64, f64)> {
    if dev.is_empty() {
        return Err(Error::Input("empty dev set".into()));
    }
    let probs = predict_dataset(model, dev, 64)?;
    let gold: Vec<&[bool]> = dev.iter().map(|s| s.labels[0].as_slice()).collect();
    select_threshold_from_probs(&probs[0], &gold, grid)
}

/// Groups the shuffled `order` into batches of similar sequence length:
/// windows of `BUCKET_BATCHES` batches are sorted by length and cut, then
/// the batch order is shuffled.
fn length_bucketed_batches(order: &[usize], samples: &[Sample], batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    const BUCKET_BATCHES: usize = 16;
    let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size));
    for window in order.chunks(batch_size * BUCKET_BATCHES) {
        let mut window = window.to_vec();
        window.sort_by_key(|&i| samples[i].tokens.len());
        batches.extend(window.chunks(batch_size).map(<[usize]>::to_vec));
    }
    rng.shuffle(&mut batches);
    batches
}

/// Mini-batch training with Adam, dropout and per-epoch dev threshold
/// selection. The returned model carries the final selected threshold.
pub fn train(mut model: Model, train_set: &[Sample], dev_set: &[Sample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    check_schema(&model, train_set)?;
    check_schema(&model, dev_set)?;
    let weights = config.task_weights(model.config().num_tasks())?;
    let root = Rng::new(config.seed);
    let mut adam = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut threshold = model.config().threshold;
    for epoch in 0..config.epochs {
        let mut shuffle_rng = root.fork(2 * epoch as u64);
        let mut dropout_rng = root.fork(2 * epoch as u64 + 1);
        shuffle_rng.shuffle(&mut order);
        let batches = length_bucketed_batches(&order, train_set, config.batch_size, &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (bi, idx) in batches.iter().enumerate() {
            let samples: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let batch = batch_of(&samples)?;
            let gold = gold_tensors(&model, &samples)?;
            let mut tape = Tape::new();
            let mode = Mode::Train {
                dropout_p: config.dropout_p,
                rng: &mut dropout_rng,
            };
            let out = model.forward(&mut tape, &batch, mode)?;
            let loss = multitask_loss(&mut tape, &out.probs, &gold, &weights)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            tape.backward(loss)?;
            let grads = model.params().collect_grads(&tape, &out.bound);
            adam_step(model.params_mut(), &grads, &mut adam, config.learning_rate)?;
            epoch_loss += value * samples.len() as f64;
        }
        let dev_weighted_f1 = if dev_set.is_empty() {
            None
        } else {
            let (t, f1) = select_threshold(&model, dev_set, &config.threshold_grid)?;
            threshold = t;
            Some(f1)
        };
        log.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            dev_weighted_f1,
            threshold,
        });
    }
    model.config_mut().threshold = threshold;
    Ok(TrainOutcome { model, log, threshold })
}
