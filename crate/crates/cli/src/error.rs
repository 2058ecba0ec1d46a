use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// A check ran to completion and failed.
    pub const FAILURE: i32 = 1;
    pub const IO: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const USAGE: i32 = 64;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}:{line}: unknown label {name:?}", path.display())]
    UnknownLabel { path: PathBuf, line: usize, name: String },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] cotask_core::Error),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use cotask_core::Error as E;
        match self {
            Self::Usage(_) => exit::USAGE,
            Self::Io { .. } | Self::Parse { .. } | Self::UnknownLabel { .. } | Self::Format { .. } => exit::IO,
            Self::Core(E::Diverged { .. }) => exit::DIVERGED,
            Self::Core(E::Config(_)) => exit::USAGE,
            Self::Core(E::Input(_) | E::Schema(_) | E::Vocab { .. }) => exit::IO,
            Self::Core(_) | Self::CheckFailed(_) => exit::FAILURE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
