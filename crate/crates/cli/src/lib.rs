//! Experiment runner: configuration, data ingestion, suites and report files.

pub mod config;
pub mod error;
pub mod output;
pub mod pgm;
pub mod suite;

pub use config::{ExperimentConfig, Settings};
pub use error::CliError;
pub use output::{emit_reports, read_reports};
pub use pgm::{load_pgm, read_pgm, PgmImage};
pub use suite::{run_suite, Command, ReportBundle};
