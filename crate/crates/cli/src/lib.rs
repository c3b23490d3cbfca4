//! Stage-by-stage pipeline behind the `reachzono` binary.

pub mod config;
pub mod error;
pub mod labels;
pub mod report;
pub mod stages;
pub mod store;

pub use config::{load, Experiment, ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
pub use stages::{run_all, run_stage, Stage};
