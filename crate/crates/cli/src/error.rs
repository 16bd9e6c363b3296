use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Core(#[from] velsched_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    /// Converged and validated, or a non-solving command succeeded.
    Success = 0,
    /// Usage, input, output or generation error.
    Error = 1,
    /// The instance is structurally infeasible; the solver did not iterate.
    InfeasibleInput = 2,
    /// The iteration cap was reached; the result bundle is still written.
    MaxIter = 3,
    /// The schedule failed the fine-grid safety check.
    Unsafe = 4,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}
