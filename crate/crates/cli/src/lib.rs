//! Experiment harness around the `hdp` library: config parsing, the `run`,
//! `sweep`, `compare` and `gen` commands, and their CSV artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod eval;

pub use commands::{cmd_compare, cmd_gen, cmd_run, cmd_sweep};
pub use config::{Overrides, RunConfig};
pub use error::CliError;
