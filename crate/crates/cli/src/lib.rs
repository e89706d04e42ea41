//! Command-line pipeline: market features, media scoring, lag sweeps, SACI
//! assembly, evaluation and synthetic fixtures, connected through frame CSV
//! files.

pub mod config;
pub mod pipeline;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] saci_core::Error),
}

impl CliError {
    /// 1 for usage and configuration errors, 2 for data errors, 3 when no
    /// indicator could be assembled.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_analysis_failure() => 3,
            CliError::Core(_) => 2,
        }
    }
}
