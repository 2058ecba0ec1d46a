//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cotask_core::SharingStrategy;

use crate::config::Overrides;
use crate::pipeline::SplitName;

#[derive(Debug, Parser)]
#[command(name = "cotask", version, about = "Multi-task text classification with co-task aware feature sharing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled corpus as JSONL.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus a training log.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split and print metrics JSON.
    Eval(EvalArgs),
    /// Print class probabilities and predicted labels for one text.
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck(GradcheckArgs),
    /// Train several strategies over several seeds and summarise test F1.
    Compare(CompareArgs),
    /// Fine-tune a binary any-symptom classifier from a checkpoint's
    /// auxiliary tower and compare it with training from scratch.
    Transfer(TransferArgs),
}

fn parse_strategy(s: &str) -> Result<SharingStrategy, String> {
    SharingStrategy::parse(s).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_text(s: &str) -> Result<String, String> {
    if s.trim().is_empty() {
        Err("text must not be empty".into())
    } else {
        Ok(s.to_string())
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct OverrideArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

impl OverrideArgs {
    pub fn to_overrides(&self, strategy: Option<SharingStrategy>, seed: Option<u64>) -> Overrides {
        Overrides {
            strategy,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            dropout: self.dropout,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_positive)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub figurative_fraction: Option<f64>,
    /// Overwrite an existing output file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// stl, hard, cross-stitch or cotask.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<SharingStrategy>,
    /// JSON file with optional "train" and "model" sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    /// Training log path; defaults to the checkpoint path with `.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split of `--data` rebuilt with the checkpoint's seed and ratios.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_text)]
    pub text: String,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model geometry; defaults to a two-layer, width-8 encoder.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check one strategy instead of all four.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<SharingStrategy>,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of seeds; runs use seeds `seed_base .. seed_base + k`.
    #[arg(long = "seeds", value_parser = parse_positive, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy, default_value = "stl,hard,cotask")]
    pub strategies: Vec<SharingStrategy>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Also write per-run scores and the summary as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train only the new head.
    #[arg(long)]
    pub freeze_encoder: bool,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}
