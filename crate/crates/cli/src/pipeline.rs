//! Split, vocabulary, training and scoring shared by the commands.

use cotask_core::data::{encode_all, split, Example, LabelSchema, Sample, Vocabulary};
use cotask_core::cotask::predict_labels;
use cotask_core::metrics::{evaluate, label_set};
use cotask_core::train::{self, EpochRecord, TrainOutcome};
use cotask_core::{Model, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliResult;

/// Fixed decision threshold for the auxiliary task; only the primary
/// threshold is tuned on dev.
pub const AUX_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> Vec<Example> {
        match name {
            SplitName::Train => self.train.clone(),
            SplitName::Dev => self.dev.clone(),
            SplitName::Test => self.test.clone(),
            SplitName::All => [&self.train[..], &self.dev, &self.test].concat(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
    All,
}

/// Seeded split by the training configuration's ratios.
pub fn split_examples(examples: &[Example], cfg: &RunConfig) -> CliResult<Splits> {
    let (train, dev, test) = split(examples, cfg.train.split_ratios, cfg.train.seed)?;
    Ok(Splits { train, dev, test })
}

/// Vocabulary of the training texts, installed into `model.encoder`.
pub fn fit_vocabulary(train: &[Example], model: &mut ModelConfig) -> Vocabulary {
    let texts: Vec<&str> = train.iter().map(|e| e.text.as_str()).collect();
    let vocab = Vocabulary::build(&texts, 1);
    model.encoder.vocab_size = vocab.len();
    vocab
}

pub fn samples(examples: &[Example], vocab: &Vocabulary, max_len: usize) -> Vec<Sample> {
    let mut encoded = examples.to_vec();
    encode_all(&mut encoded, vocab, max_len);
    encoded.iter().map(Example::to_sample).collect()
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: Model,
    pub vocabulary: Vocabulary,
    pub splits: Splits,
    pub log: Vec<EpochRecord>,
    pub threshold: f64,
}

/// Split, fit the vocabulary on the training part, initialise with the
/// configured seed and train.
pub fn train_run(examples: &[Example], cfg: &RunConfig) -> CliResult<TrainedRun> {
    let splits = split_examples(examples, cfg)?;
    let mut model_cfg = cfg.model.clone();
    let vocabulary = fit_vocabulary(&splits.train, &mut model_cfg);
    let max_len = model_cfg.encoder.max_len;
    let train_set = samples(&splits.train, &vocabulary, max_len);
    let dev_set = samples(&splits.dev, &vocabulary, max_len);
    let model = Model::init(model_cfg, cfg.train.seed)?;
    let TrainOutcome { model, log, threshold } = train::train(model, &train_set, &dev_set, &cfg.train)?;
    Ok(TrainedRun {
        model,
        vocabulary,
        splits,
        log,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub threshold: f64,
    pub per_class: Vec<ClassReport>,
    pub weighted: cotask_core::metrics::Prf,
    pub micro: cotask_core::metrics::Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: SplitName,
    pub num_examples: usize,
    /// Primary-task threshold.
    pub threshold: f64,
    pub tasks: Vec<TaskReport>,
}

impl MetricsReport {
    pub fn task(&self, idx: usize) -> &TaskReport {
        &self.tasks[idx]
    }
}

/// Scores every task of `model` on `examples`. The primary task uses
/// `threshold`, the auxiliary task [`AUX_THRESHOLD`].
pub fn score(
    model: &Model,
    vocab: &Vocabulary,
    schema: &LabelSchema,
    examples: &[Example],
    threshold: f64,
    split: SplitName,
) -> CliResult<MetricsReport> {
    let data = samples(examples, vocab, model.config().encoder.max_len);
    let probs = train::predict_dataset(model, &data, 64)?;
    let names = [&schema.primary_names, &schema.aux_names];
    let mut tasks = Vec::new();
    for (t, task_probs) in probs.iter().enumerate() {
        let task_threshold = if t == 0 { threshold } else { AUX_THRESHOLD };
        let preds = task_probs
            .iter()
            .map(|p| predict_labels(p, task_threshold))
            .collect::<cotask_core::Result<Vec<_>>>()?;
        let gold: Vec<Vec<usize>> = data.iter().map(|s| label_set(&s.labels[t])).collect();
        let m = evaluate(&preds, &gold, model.config().tasks[t].num_classes)?;
        let per_class = m
            .per_class
            .iter()
            .zip(names[t])
            .map(|(c, name)| ClassReport {
                name: name.clone(),
                precision: c.prf.precision,
                recall: c.prf.recall,
                f1: c.prf.f1,
                support: c.support,
            })
            .collect();
        tasks.push(TaskReport {
            task: model.config().tasks[t].name.clone(),
            threshold: task_threshold,
            per_class,
            weighted: m.weighted,
            micro: m.micro,
        });
    }
    Ok(MetricsReport {
        split,
        num_examples: data.len(),
        threshold,
        tasks,
    })
}
