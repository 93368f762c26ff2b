//! Command-line harness: training runs, translation, evaluation, ablation,
//! gradient checks and checkpoint persistence.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;

pub use error::CliError;
