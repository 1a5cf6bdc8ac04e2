//! Experiment runner, validation pipeline and command-line interface on top
//! of the `lshawkes` core crate.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod stats;
pub mod validate;

pub use config::{ExperimentConfig, ModelRef, Rule};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentReport, ReportRow};
pub use validate::{validate_pipeline, ValidationOptions, ValidationReport};
