use thiserror::Error;

use crate::dataset::FormatError;

/// Command failure, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit code 3.
    #[error("solver failure budget exceeded: {0}")]
    SolverBudget(String),
    /// Exit code 4.
    #[error("I/O error: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    /// Exit code 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::SolverBudget(_) => 3,
            CliError::Io { .. } | CliError::Format(_) => 4,
            CliError::Failed(_) => 1,
        }
    }
}
