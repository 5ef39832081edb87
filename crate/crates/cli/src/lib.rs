//! Experiment harness: exact diagonalization, training runs, post-processing,
//! regime scans, grid searches and gate statistics, with TOML configs and
//! CSV/JSON outputs.

pub mod circuit_file;
pub mod commands;
pub mod config;
pub mod output;

pub use circuit_file::{CircuitFile, CircuitFileError};
pub use config::{ConfigError, ExperimentConfig};
