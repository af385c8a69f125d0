//! Config-driven experiment runner: validates flat key=value experiment
//! configurations, drives the optimizer, writes CSV learning curves, and
//! checkpoints optimizer state for exact resumption.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod trace;

pub use config::{validate_config, CriterionChoice, Experiment, ExperimentConfig, LayoutChoice};
pub use experiments::{run_experiment, CliError, RunOptions, RunOutcome};
