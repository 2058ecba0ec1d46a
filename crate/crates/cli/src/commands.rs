//! Command implementations. Results go to `out`; progress goes to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cotask_core::data::{synth_generate, Example, LabelSchema, SynthSpec};
use cotask_core::encoder::EncoderConfig;
use cotask_core::train::{self, gradient_check, GradCheckReport, GradTolerance, TrainConfig};
use cotask_core::{Model, ModelConfig, Rng, SharingStrategy, TaskConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, Checkpoint};
use crate::cli::{CompareArgs, EvalArgs, GradcheckArgs, PredictArgs, SynthArgs, TrainArgs, TransferArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::jsonl::{load_jsonl, save_jsonl};
use crate::pipeline::{self, samples, score, SplitName};
use crate::stats::{summarize, SummaryRow};

fn write_line(out: &mut dyn Write, line: &str) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

pub fn synth(args: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.out.exists() && !args.force {
        return Err(CliError::io(
            &args.out,
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "file exists (use --force to overwrite)"),
        ));
    }
    let mut spec = SynthSpec::default();
    if let Some(f) = args.figurative_fraction {
        spec.figurative_fraction = f;
    }
    let data = synth_generate(args.n, args.seed, &spec)?;
    save_jsonl(&args.out, &data, &LabelSchema::default())?;
    write_line(out, &format!("wrote {} examples to {}", data.len(), args.out.display()))
}

/// Final summary printed by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub strategy: SharingStrategy,
    pub seed: u64,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub threshold: f64,
    pub dev_weighted_f1: Option<f64>,
    pub test_weighted_f1: f64,
    pub test_aux_weighted_f1: f64,
}

pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".log.jsonl");
    checkpoint.with_file_name(name)
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides.to_overrides(args.strategy, args.seed))?;
    let schema = LabelSchema::default();
    let examples = load_jsonl(&args.data, &schema)?;
    let run = pipeline::train_run(&examples, &cfg)?;

    let log_path = args.log.clone().unwrap_or_else(|| default_log_path(&args.out_checkpoint));
    let mut log = String::new();
    for rec in &run.log {
        log.push_str(&to_json(rec));
        log.push('\n');
    }
    fs::write(&log_path, log).map_err(|e| CliError::io(&log_path, e))?;
    Checkpoint::new(&run.model, &cfg.train, &schema, &run.vocabulary, run.threshold).save(&args.out_checkpoint)?;

    let test = score(&run.model, &run.vocabulary, &schema, &run.splits.test, run.threshold, SplitName::Test)?;
    let last = run.log.last().expect("at least one epoch");
    let summary = TrainSummary {
        strategy: cfg.model.strategy,
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
        final_train_loss: last.train_loss,
        threshold: run.threshold,
        dev_weighted_f1: last.dev_weighted_f1,
        test_weighted_f1: test.task(0).weighted.f1,
        test_aux_weighted_f1: test.task(1).weighted.f1,
    };
    write_line(out, &to_json(&summary))
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let examples = load_jsonl(&args.data, &ckpt.schema)?;
    let cfg = RunConfig {
        train: ckpt.train_config.clone(),
        model: ckpt.model.config().clone(),
    };
    let part = pipeline::split_examples(&examples, &cfg)?.get(args.split);
    let report = score(&ckpt.model, &ckpt.vocabulary, &ckpt.schema, &part, ckpt.threshold, args.split)?;
    write_line(out, &to_json(&report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbability {
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPrediction {
    pub task: String,
    pub threshold: f64,
    pub probabilities: Vec<ClassProbability>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub text: String,
    pub tasks: Vec<TaskPrediction>,
}

/// Probabilities and thresholded labels for one text.
pub fn predict_text(ckpt: &crate::checkpoint::Loaded, text: &str) -> CliResult<Prediction> {
    let ex = Example::new(text, vec![false; ckpt.schema.primary_names.len()], vec![false, false, true]);
    let data = samples(&[ex], &ckpt.vocabulary, ckpt.model.config().encoder.max_len);
    let probs = train::predict_dataset(&ckpt.model, &data, 1)?;
    let names = [&ckpt.schema.primary_names, &ckpt.schema.aux_names];
    let tasks = probs
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let threshold = if t == 0 { ckpt.threshold } else { pipeline::AUX_THRESHOLD };
            let p = &p[0];
            TaskPrediction {
                task: ckpt.model.config().tasks[t].name.clone(),
                threshold,
                probabilities: names[t]
                    .iter()
                    .zip(p)
                    .map(|(name, &probability)| ClassProbability {
                        name: name.clone(),
                        probability,
                    })
                    .collect(),
                labels: names[t]
                    .iter()
                    .zip(p)
                    .filter(|(_, &q)| q >= threshold)
                    .map(|(n, _)| n.clone())
                    .collect(),
            }
        })
        .collect();
    Ok(Prediction {
        text: text.to_string(),
        tasks,
    })
}

pub fn predict(args: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    write_line(out, &to_json(&predict_text(&ckpt, &args.text)?))
}

/// Two-layer, width-8 geometry used for gradient checks.
pub fn gradcheck_model_config(strategy: SharingStrategy) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            num_layers: 2,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            max_len: 8,
            vocab_size: 16,
            tap_top_k: 2,
        },
        proj_dim: 8,
        strategy,
        ..ModelConfig::default()
    }
}

/// Three random token sequences with random labels for both tasks.
pub fn gradcheck_batch(config: &ModelConfig, seed: u64) -> Vec<cotask_core::data::Sample> {
    let mut rng = Rng::new(seed).fork(7);
    let vocab = config.encoder.vocab_size;
    let longest = config.encoder.max_len.min(6);
    (0..3)
        .map(|_| {
            let len = 2 + rng.below(longest - 1);
            let tokens = (0..len).map(|_| 3 + rng.below(vocab - 3)).collect();
            let labels = config
                .tasks
                .iter()
                .map(|t| (0..t.num_classes).map(|_| rng.bernoulli(0.5)).collect())
                .collect();
            cotask_core::data::Sample { tokens, labels }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckLine {
    pub strategy: SharingStrategy,
    #[serde(flatten)]
    pub report: GradCheckReport,
}

/// Runs the gradient check for each requested strategy.
pub fn run_gradcheck(model_cfg: Option<&ModelConfig>, strategies: &[SharingStrategy], seed: u64, eps: f64) -> CliResult<Vec<GradcheckLine>> {
    let weights = TrainConfig::default().task_weights(2)?;
    strategies
        .iter()
        .map(|&strategy| {
            let cfg = match model_cfg {
                Some(c) => ModelConfig { strategy, ..c.clone() },
                None => gradcheck_model_config(strategy),
            };
            let batch = gradcheck_batch(&cfg, seed);
            let model = Model::init(cfg, seed)?;
            let report = gradient_check(&model, &batch, &weights, eps, GradTolerance::default())?;
            Ok(GradcheckLine { strategy, report })
        })
        .collect()
}

pub fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let model_cfg = match &args.config {
        Some(p) => Some(RunConfig::load(p)?.model),
        None => None,
    };
    let strategies = match args.strategy {
        Some(s) => vec![s],
        None => SharingStrategy::ALL.to_vec(),
    };
    let lines = run_gradcheck(model_cfg.as_ref(), &strategies, args.seed, args.eps)?;
    for l in &lines {
        write_line(out, &to_json(l))?;
    }
    let failed: Vec<String> = lines.iter().filter(|l| !l.report.passed).map(|l| l.strategy.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("gradient check failed for {}", failed.join(", "))))
    }
}

/// Test-split scores of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub strategy: SharingStrategy,
    pub seed: u64,
    pub threshold: f64,
    /// Weighted F1 per task, primary first.
    pub weighted_f1: Vec<f64>,
}

/// Trains every strategy on every seed. Each seed fixes the split, the
/// initialisation and the batch order, so strategies are paired by seed.
pub fn compare_runs(
    examples: &[Example],
    base: &RunConfig,
    strategies: &[SharingStrategy],
    seeds: &[u64],
    mut progress: impl FnMut(&RunScore),
) -> CliResult<Vec<RunScore>> {
    let schema = LabelSchema::default();
    let mut scores = Vec::new();
    for &seed in seeds {
        for &strategy in strategies {
            let mut cfg = base.clone();
            cfg.model.strategy = strategy;
            cfg.train.seed = seed;
            let run = pipeline::train_run(examples, &cfg)?;
            let report = score(&run.model, &run.vocabulary, &schema, &run.splits.test, run.threshold, SplitName::Test)?;
            let s = RunScore {
                strategy,
                seed,
                threshold: run.threshold,
                weighted_f1: report.tasks.iter().map(|t| t.weighted.f1).collect(),
            };
            progress(&s);
            scores.push(s);
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutput {
    pub runs: Vec<RunScore>,
    pub summary: Vec<SummaryRow>,
}

pub fn compare(args: &CompareArgs, out: &mut dyn Write) -> CliResult<()> {
    let base = RunConfig::resolve(args.config.as_deref(), &args.overrides.to_overrides(None, None))?;
    let examples = load_jsonl(&args.data, &LabelSchema::default())?;
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed_base + i).collect();
    let runs = compare_runs(&examples, &base, &args.strategies, &seeds, |s| {
        eprintln!("seed {} {}: weighted F1 {:?}", s.seed, s.strategy, s.weighted_f1);
    })?;
    let task_names: Vec<String> = base.model.tasks.iter().map(|t| t.name.clone()).collect();
    let summary = summarize(&runs, &args.strategies, &task_names);
    write_line(out, &format!("{:<14}{:<12}{:>8}{:>8}{:>8}{:>6}", "strategy", "task", "median", "q1", "q3", "n"))?;
    for row in &summary {
        write_line(
            out,
            &format!(
                "{:<14}{:<12}{:>8.4}{:>8.4}{:>8.4}{:>6}",
                row.strategy.as_str(),
                row.task,
                row.median,
                row.q1,
                row.q3,
                row.values.len()
            ),
        )?;
    }
    if let Some(path) = &args.json {
        let doc = serde_json::to_string_pretty(&CompareOutput { runs, summary }).expect("plain data serializes");
        fs::write(path, doc).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub seed: u64,
    pub epochs: usize,
    pub freeze_encoder: bool,
    pub transfer_accuracy: f64,
    pub scratch_accuracy: f64,
}

/// Single-task, one-class configuration sharing the source encoder.
pub fn binary_target_config(source: &ModelConfig) -> ModelConfig {
    ModelConfig {
        encoder: source.encoder.clone(),
        tasks: vec![TaskConfig {
            name: "depressive".into(),
            num_classes: 1,
        }],
        strategy: SharingStrategy::SingleTask,
        proj_dim: source.proj_dim,
        ..ModelConfig::default()
    }
}

/// Fine-tunes from `source` and from scratch on the same binary
/// any-symptom split, with the same seed and epoch budget.
pub fn transfer_pair(
    source: &Model,
    vocab: &cotask_core::data::Vocabulary,
    examples: &[Example],
    config: &TrainConfig,
    freeze_encoder: bool,
) -> CliResult<TransferReport> {
    let (tr, dv, te) = cotask_core::data::split(examples, config.split_ratios, config.seed)?;
    let max_len = source.config().encoder.max_len;
    let binary = |xs: &[Example]| -> Vec<cotask_core::data::Sample> {
        let mut enc = xs.to_vec();
        cotask_core::data::encode_all(&mut enc, vocab, max_len);
        enc.iter().map(Example::to_binary_sample).collect()
    };
    let (tr, dv, te) = (binary(&tr), binary(&dv), binary(&te));
    let target = binary_target_config(source.config());
    let transferred = train::transfer_finetune(source, &target, &tr, &dv, &te, config, freeze_encoder)?;
    let scratch = train::finetune(Model::init(target, config.seed)?, &tr, &dv, &te, config, freeze_encoder)?;
    Ok(TransferReport {
        seed: config.seed,
        epochs: config.epochs,
        freeze_encoder,
        transfer_accuracy: transferred.accuracy,
        scratch_accuracy: scratch.accuracy,
    })
}

pub fn transfer(args: &TransferArgs, out: &mut dyn Write) -> CliResult<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let examples = load_jsonl(&args.data, &ckpt.schema)?;
    let mut cfg = RunConfig {
        train: ckpt.train_config.clone(),
        model: ckpt.model.config().clone(),
    };
    cfg.apply(&args.overrides.to_overrides(None, args.seed));
    let report = transfer_pair(&ckpt.model, &ckpt.vocabulary, &examples, &cfg.train, args.freeze_encoder)?;
    write_line(out, &to_json(&report))
}
