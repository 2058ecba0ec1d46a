//! Fine-tuning a binary classifier from a trained multitask checkpoint.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{predict_dataset, train, EpochRecord, TrainConfig};
use crate::cotask::{predict_labels, SharingStrategy};
use crate::data::Sample;
use crate::encoder::tower_param_names;
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::model::{Model, ModelConfig};

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub threshold: f64,
    /// Test accuracy of the single binary label.
    pub accuracy: f64,
}

/// Fresh `target` model (seeded by `seed`) whose single tower is a bit-exact
/// copy of the source's auxiliary-task tower. `target` must be a one-task
/// single-task configuration with the source's encoder geometry.
pub fn transfer_init(source: &Model, target: &ModelConfig, seed: u64) -> Result<Model> {
    if target.strategy != SharingStrategy::SingleTask || target.num_tasks() != 1 {
        return Err(Error::config("transfer target must be a one-task single-task model"));
    }
    if target.encoder != source.config().encoder {
        return Err(Error::config(format!(
            "encoder geometry mismatch: checkpoint {:?}, target {:?}",
            source.config().encoder,
            target.encoder
        )));
    }
    if source.config().num_tasks() < 2 {
        return Err(Error::config("source model has no auxiliary task"));
    }
    let from = source.config().tower_prefix(1);
    let mut model = Model::init(target.clone(), seed)?;
    let src_names = tower_param_names(&source.config().encoder, &from);
    let dst_names = tower_param_names(&target.encoder, &target.tower_prefix(0));
    for (s, d) in src_names.iter().zip(&dst_names) {
        let value = source.params().get(s).ok_or_else(|| Error::config(format!("checkpoint lacks {s:?}")))?;
        let slot = model.params_mut().get_mut(d).ok_or_else(|| Error::config(format!("target lacks {d:?}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::config(format!("shape mismatch for {d:?}")));
        }
        slot.data_mut().copy_from_slice(value.data());
    }
    Ok(model)
}

/// Accuracy of the thresholded single-label prediction.
pub fn binary_accuracy(model: &Model, samples: &[Sample], threshold: f64) -> Result<f64> {
    let probs = predict_dataset(model, samples, 64)?;
    let preds = probs[0]
        .iter()
        .map(|p| Ok(!predict_labels(&p[..1], threshold)?.is_empty()))
        .collect::<Result<Vec<bool>>>()?;
    let gold: Vec<bool> = samples.iter().map(|s| s.labels[0][0]).collect();
    accuracy(&preds, &gold)
}

/// Trains `model` on the binary task and scores it on `test`. With
/// `freeze_encoder` only the head parameters are updated.
pub fn finetune(
    mut model: Model,
    train_set: &[Sample],
    dev: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    freeze_encoder: bool,
) -> Result<TransferOutcome> {
    if freeze_encoder {
        let prefix: String = format!("{}.", model.config().tower_prefix(0));
        model.params_mut().set_frozen_prefix(&prefix, true);
    }
    let out = train(model, train_set, dev, config)?;
    let accuracy = binary_accuracy(&out.model, test, out.threshold)?;
    Ok(TransferOutcome {
        model: out.model,
        log: out.log,
        threshold: out.threshold,
        accuracy,
    })
}

/// [`transfer_init`] followed by [`finetune`]. The from-scratch baseline is
/// `finetune(Model::init(target, seed)?, ..)` with the same arguments.
#[allow(clippy::too_many_arguments)]
pub fn transfer_finetune(
    source: &Model,
    target: &ModelConfig,
    train_set: &[Sample],
    dev: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    freeze_encoder: bool,
) -> Result<TransferOutcome> {
    let model = transfer_init(source, target, config.seed)?;
    finetune(model, train_set, dev, test, config, freeze_encoder)
}
