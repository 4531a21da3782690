use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: tvreg_core::Error,
    },

    #[error("pgm {path}: {msg}")]
    Pgm { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("reports.csv: {0}")]
    Parse(String),
}

impl CliError {
    /// Wraps a core error with the pipeline stage it came from.
    pub fn at(stage: &'static str) -> impl Fn(tvreg_core::Error) -> CliError + Copy {
        move |source| CliError::Stage { stage, source }
    }
}
