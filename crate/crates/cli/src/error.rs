use std::io;
use std::path::PathBuf;

use crate::checkpoint::CheckpointError;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for numeric, run, data and I/O failures.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for configuration and usage errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read config {}: {source}", path.display())]
    ConfigRead { path: PathBuf, source: io::Error },

    #[error("invalid config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: CheckpointError },

    #[error("schema error in {}: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] flatlab_core::Error),

    #[error("{failed} of {total} seeds failed")]
    SeedsFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigRead { .. } | CliError::Config { .. } | CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(flatlab_core::Error::Config(_)) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }

    /// Short stable tag printed with the message so scripts can tell
    /// failures with the same exit status apart.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::ConfigRead { .. } => "config-read",
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Checkpoint { source, .. } => source.code(),
            CliError::Schema { .. } => "schema",
            CliError::Core(flatlab_core::Error::Config(_)) => "config",
            CliError::Core(_) => "numeric",
            CliError::SeedsFailed { .. } => "run",
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
