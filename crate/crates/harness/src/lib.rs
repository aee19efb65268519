//! Experiment harness: configuration, presets, seeded Monte-Carlo sweeps and
//! CSV output for the `anm` command line tool.

pub mod cli;
pub mod config;
pub mod presets;
pub mod sweep;
pub mod trial;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] anm_modal::AnmError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 for usage and configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub use config::ExperimentConfig;
pub use sweep::{run_sweep, summarize, SummaryRow};
pub use trial::{run_trial, GridPoint, ResultRow};
