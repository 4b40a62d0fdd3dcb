//! Configuration, orchestration and output for `plap` experiments.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use experiment::{run_experiment, ExperimentOutcome};
