//! The `flatlab` command line: config files, checkpoints and the
//! train / landscape / sequence / compare workflow around `flatlab-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
