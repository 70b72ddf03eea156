//! Experiment runner for the continued-fraction benchmarks: config files,
//! protocol execution, model files and plot-ready CSV output.

pub mod config;
pub mod pareto;
pub mod persist;
pub mod plots;
pub mod protocols;
pub mod runner;
pub mod summary;

pub use config::{ExperimentConfig, ProtocolId};
pub use runner::{dry_run, run, RunError, RunOutput};
