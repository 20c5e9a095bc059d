//! Reproducible command runs over the `capcal-core` analyses.
//!
//! Each command reads a [`config::RunConfig`], writes comma-delimited
//! reports into an output directory, and maps failures onto exit codes:
//! 0 success, 2 input or parse failure, 3 analysis failure.

use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;
pub mod schema;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Analysis(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Analysis(_) => 3,
        }
    }
}

impl From<capcal_core::ingest::IngestError> for CliError {
    fn from(e: capcal_core::ingest::IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}
