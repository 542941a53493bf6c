use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, invalid configuration values or missing inputs (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Help or version output requested; clap prints it (exit 0).
    #[error("{0}")]
    Clap(#[from] clap::Error),
    /// Failures while reading, computing or writing (exit 1).
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn missing(what: &str, path: &Path) -> Self {
        CliError::Usage(format!("{what} not found: {}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Clap(e) if !e.use_stderr() => 0,
            CliError::Clap(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<mapinfer_core::ingest::ConfigError> for CliError {
    fn from(e: mapinfer_core::ingest::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}
