//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use cotask_core::data::{synth_generate, LabelSchema, SynthSpec};

/// Small encoder and head so that command-level tests finish in seconds.
pub const TINY_CONFIG: &str = r#"{
  "train": { "epochs": 2, "batch_size": 16, "learning_rate": 0.003 },
  "model": {
    "encoder": { "num_layers": 2, "hidden_dim": 8, "num_heads": 2, "ffn_dim": 16, "max_len": 32, "tap_top_k": 2 },
    "proj_dim": 16
  }
}"#;

pub fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

pub fn write_corpus(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let data = synth_generate(n, seed, &SynthSpec::default()).unwrap();
    cotask::jsonl::save_jsonl(&path, &data, &LabelSchema::default()).unwrap();
    path
}

/// Runs the command in-process and returns (exit code, stdout).
pub fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["cotask"];
    argv.extend_from_slice(args);
    let code = cotask::run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

/// Runs the built binary and returns (exit code, stdout).
pub fn run_bin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cotask")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
