//! Full multi-task model: towers, optional sharing factors and task heads.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::cotask::{self, ShareForm, SharingStrategy, TaskHead, TaskHeadNames, ALPHA, BETA};
use crate::encoder::{self, EncoderConfig, TokenBatch};
use crate::error::{Error, Result};
use crate::params::{Bound, Parameters};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub name: String,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub tasks: Vec<TaskConfig>,
    pub proj_dim: usize,
    pub threshold: f64,
    pub strategy: SharingStrategy,
    pub share_form: ShareForm,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            tasks: vec![
                TaskConfig {
                    name: "symptom".into(),
                    num_classes: 9,
                },
                TaskConfig {
                    name: "figurative".into(),
                    num_classes: 3,
                },
            ],
            proj_dim: 256,
            threshold: 0.5,
            strategy: SharingStrategy::CoTaskAware,
            share_form: ShareForm::Symmetric,
        }
    }
}

impl ModelConfig {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::config("at least one task is required"));
        }
        if self.tasks.iter().any(|t| t.num_classes == 0) {
            return Err(Error::config("every task needs at least one class"));
        }
        if self.proj_dim == 0 {
            return Err(Error::config("proj_dim must be positive"));
        }
        cotask::check_threshold(self.threshold)?;
        if self.share_form == ShareForm::Printed && self.num_tasks() != 2 {
            return Err(Error::config("the printed sharing form needs exactly two tasks"));
        }
        Ok(())
    }

    /// Tower prefix used by task `task`.
    pub fn tower_prefix(&self, task: usize) -> String {
        match self.strategy {
            SharingStrategy::HardShared => "tower0".to_string(),
            _ => format!("tower{task}"),
        }
    }

    /// Every parameter the model owns, with its shape and frozen flag.
    pub fn expected_params(&self) -> Vec<(String, Vec<usize>, bool)> {
        let e = &self.encoder;
        let t = self.num_tasks();
        let mut out = Vec::new();
        for tower in 0..self.strategy.num_towers(t) {
            let prefix = format!("tower{tower}");
            let mut throwaway = Parameters::new();
            let _ = encoder::encoder_init(e, &prefix, &mut throwaway, &mut Rng::new(0));
            for p in throwaway.iter() {
                out.push((p.name.clone(), p.tensor.shape().to_vec(), false));
            }
        }
        if self.strategy.uses_sharing_factors() {
            out.push((ALPHA.to_string(), vec![t, t], false));
            let frozen = self.strategy == SharingStrategy::CrossStitch;
            out.push((BETA.to_string(), vec![e.tap_top_k, t, t], frozen));
        }
        for (i, task) in self.tasks.iter().enumerate() {
            let n = TaskHeadNames::new(i);
            out.push((n.proj_weight, vec![self.proj_dim, e.hidden_dim], false));
            out.push((n.proj_bias, vec![self.proj_dim], false));
            out.push((n.head_weight, vec![task.num_classes, self.proj_dim], false));
            out.push((n.head_bias, vec![task.num_classes], false));
        }
        out
    }
}

/// Forward-pass mode. Dropout is only active in training.
pub enum Mode<'a> {
    Eval,
    Train { dropout_p: f64, rng: &'a mut Rng },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    config: ModelConfig,
    params: Parameters,
}

/// Result of [`Model::forward`]: one `[batch, classes]` probability tensor
/// per task, plus the parameter bindings for collecting gradients.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: Vec<Var>,
    pub bound: Bound,
}

impl Model {
    /// Fresh model with seeded initialisation.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(seed);
        let mut params = Parameters::new();
        let t = config.num_tasks();
        for tower in 0..config.strategy.num_towers(t) {
            let mut rng = root.fork(100 + tower as u64);
            encoder::encoder_init(&config.encoder, &format!("tower{tower}"), &mut params, &mut rng)?;
        }
        if config.strategy.uses_sharing_factors() {
            let mut alpha = Tensor::full(&[t, t], 0.1);
            for i in 0..t {
                alpha.data_mut()[i * t + i] = 0.9;
            }
            params.insert(ALPHA, alpha, false)?;
            let frozen = config.strategy == SharingStrategy::CrossStitch;
            params.insert(BETA, Tensor::full(&[config.encoder.tap_top_k, t, t], 1.0), frozen)?;
        }
        let d = config.encoder.hidden_dim;
        for (i, task) in config.tasks.iter().enumerate() {
            let mut rng = root.fork(200 + i as u64);
            let n = TaskHeadNames::new(i);
            let pw = encoder::xavier_uniform(&[config.proj_dim, d], d, config.proj_dim, &mut rng);
            params.insert(&n.proj_weight, pw, false)?;
            params.insert(&n.proj_bias, Tensor::zeros(&[config.proj_dim]), false)?;
            let hw = encoder::xavier_uniform(
                &[task.num_classes, config.proj_dim],
                config.proj_dim,
                task.num_classes,
                &mut rng,
            );
            params.insert(&n.head_weight, hw, false)?;
            params.insert(&n.head_bias, Tensor::zeros(&[task.num_classes]), false)?;
        }
        Ok(Self { config, params })
    }

    /// Assembles a model from stored parameters, checking that names and
    /// shapes agree with the configuration and strategy.
    pub fn from_parts(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        let expected = config.expected_params();
        if expected.len() != params.len() {
            return Err(Error::config(format!(
                "strategy {} expects {} parameters, found {}",
                config.strategy,
                expected.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &expected {
            let t = params
                .get(name)
                .ok_or_else(|| Error::config(format!("strategy {} requires parameter {name:?}", config.strategy)))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter {name:?} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut ModelConfig {
        &mut self.config
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, Parameters) {
        (self.config, self.params)
    }

    fn head(&self, bound: &Bound, task: usize) -> Result<TaskHead> {
        let n = TaskHeadNames::new(task);
        let v = |name: &str| -> Result<Var> { Ok(bound.var(self.params.require(name)?)) };
        Ok(TaskHead {
            proj_weight: v(&n.proj_weight)?,
            proj_bias: v(&n.proj_bias)?,
            head_weight: v(&n.head_weight)?,
            head_bias: v(&n.head_bias)?,
        })
    }

    /// Records the forward pass on `tape` and returns per-task probabilities.
    pub fn forward(&self, tape: &mut Tape, batch: &TokenBatch, mut mode: Mode<'_>) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let t = cfg.num_tasks();
        let bound = self.params.bind(tape);
        let towers = cfg.strategy.num_towers(t);
        let mut tower_states = Vec::with_capacity(towers);
        for tower in 0..towers {
            let prefix = format!("tower{tower}");
            let s = encoder::encoder_forward(tape, &self.params, &bound, &prefix, &cfg.encoder, batch)?;
            tower_states.push(s.states);
        }
        let k = cfg.encoder.tap_top_k;
        // shared[task][layer]
        let shared: Vec<Vec<Var>> = match cfg.strategy {
            SharingStrategy::SingleTask => tower_states,
            SharingStrategy::HardShared => vec![tower_states[0].clone(); t],
            SharingStrategy::CrossStitch | SharingStrategy::CoTaskAware => {
                let alpha = bound.var(self.params.require(ALPHA)?);
                let beta = bound.var(self.params.require(BETA)?);
                let mut per_task = vec![Vec::with_capacity(k); t];
                for l in 0..k {
                    let features: Vec<Var> = tower_states.iter().map(|s| s[l]).collect();
                    let mixed = cotask::cotask_share(tape, &features, alpha, beta, l, cfg.share_form)?;
                    for (task, r) in mixed.into_iter().enumerate() {
                        per_task[task].push(r);
                    }
                }
                per_task
            }
        };
        let mut probs = Vec::with_capacity(t);
        for (task, layers) in shared.iter().enumerate() {
            let head = self.head(&bound, task)?;
            let mut z = cotask::pool_task_features(tape, layers, &head)?;
            if let Mode::Train { dropout_p, rng } = &mut mode {
                z = tape.dropout(z, *dropout_p, rng, true)?;
            }
            probs.push(cotask::classify(tape, z, &head)?);
        }
        Ok(ForwardOutput { probs, bound })
    }

    /// Inference probabilities as `[task][example][class]`.
    pub fn predict_proba(&self, batch: &TokenBatch) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, Mode::Eval)?;
        Ok(out
            .probs
            .iter()
            .map(|&p| {
                let classes = tape.shape(p)[1];
                tape.value(p).data().chunks(classes).map(<[f64]>::to_vec).collect()
            })
            .collect())
    }
}
