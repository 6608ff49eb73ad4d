use std::io;

use nrerank_core::io::{LabelsError, NpyError};
use thiserror::Error;

/// Failure classes of a command; each maps to its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<nrerank_core::Error> for CliError {
    fn from(e: nrerank_core::Error) -> Self {
        match e {
            nrerank_core::Error::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("JSON: {e}"))
    }
}

pub(crate) fn npy_error(path: &std::path::Path, e: NpyError) -> CliError {
    match e {
        NpyError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    }
}

pub(crate) fn labels_error(path: &std::path::Path, e: LabelsError) -> CliError {
    match e {
        LabelsError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    }
}

pub type CliResult<T> = Result<T, CliError>;
