use std::path::Path;

use ictogen::error::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] ictogen::Error),
    /// Verification ran but some checks failed.
    #[error("failed checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Io => 3,
                ErrorClass::Format => 4,
                ErrorClass::Numerical => 5,
            },
        }
    }
}

/// Lifts any module error into [`CliError`] through the crate-wide error.
pub fn core<E: Into<ictogen::Error>>(e: E) -> CliError {
    CliError::Core(e.into())
}
