//! Command-line pipeline: data ingest or benchmark generation, clustering,
//! attractor search, optional diffeomorphism training and result export.

pub mod config;
pub mod export;
pub mod io;
pub mod pipeline;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{PipelineConfig, Source};
pub use pipeline::{run_pipeline, PipelineOutcome, PipelineReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("csv: line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("io: {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Core(#[from] attractorscope::Error),
}

impl CliError {
    /// Name of the module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.module(),
            _ => "cli",
        }
    }
}

impl CliError {
    pub(crate) fn core<E: Into<attractorscope::Error>>(e: E) -> Self {
        CliError::Core(e.into())
    }
}
