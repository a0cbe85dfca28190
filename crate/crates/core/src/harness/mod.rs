//! Experiment harness: configuration files, task runners and output files.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_for, ConfigError, ConfigErrors, ExperimentConfig, TaskKind};
pub use run::{run, RunManifest, RunOptions};
