//! Experiment runner for accuracy-surface estimation: synthetic worlds,
//! estimator grids, calibration and active exploration.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::RunOptions;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
