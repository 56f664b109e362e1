//! Config-driven experiment runner for pinvnet: hidden-size sweeps, lambda
//! tuning, single-network training and prediction, all writing
//! self-describing CSV files.
//!
//! Exit statuses: 0 success, 1 runtime failure, 2 usage or config error.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_predict, cmd_sweep, cmd_train, cmd_tune};
pub use config::{ExperimentConfig, RawConfig};
pub use error::{CliError, CliResult};
