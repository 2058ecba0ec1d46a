//! Files, checkpoints and the `cotask` command-line tool on top of
//! `cotask-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod jsonl;
pub mod pipeline;
pub mod stats;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use error::{exit, CliError, CliResult};

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::SUCCESS,
                _ => exit::USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &parsed.command {
        cli::Command::Synth(a) => commands::synth(a, out),
        cli::Command::Train(a) => commands::train(a, out),
        cli::Command::Eval(a) => commands::eval(a, out),
        cli::Command::Predict(a) => commands::predict(a, out),
        cli::Command::Gradcheck(a) => commands::gradcheck(a, out),
        cli::Command::Compare(a) => commands::compare(a, out),
        cli::Command::Transfer(a) => commands::transfer(a, out),
    };
    match result {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
