//! Experiment runner behind the `amoments` binary: argument parsing,
//! deterministic chunked execution, checkpoints and CSV output.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod parallel;

pub use args::Cli;
pub use commands::{run, ExperimentConfig};
pub use error::CliError;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
