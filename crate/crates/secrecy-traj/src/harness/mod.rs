//! Config-driven experiments and machine-readable result files.

mod config;
mod output;
mod run;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentMode, ExperimentSpec};
pub use output::write_outputs;
pub use run::{run_experiment, ExperimentOutcome, ResultRow, RunArtifact, RunRowStatus, TraceRow};
