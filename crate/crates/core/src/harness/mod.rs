//! Operational surface: configuration, reference experiments, verification
//! checks, report output and the command-line entry point.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod report;
pub mod verify;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, ExperimentOutcome, ReportRow};
pub use verify::{run_verification_suite, CheckReport, SuiteReport};
