use std::path::Path;

use hierground_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, flags or input files.
    #[error("{0}")]
    Validation(String),
    /// Anything that goes wrong while running a valid request.
    #[error("{0}")]
    Runtime(String),
    /// A diagnostic ran to completion and reported a failure.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }

    pub fn field(field: &str, reason: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("invalid configuration field `{field}`: {reason}"))
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn parse(path: &Path, line: usize, e: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{}:{line}: {e}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig { .. }
            | CoreError::Parse { .. }
            | CoreError::IncompatibleCheckpoint(_)
            | CoreError::EmptyCaption
            | CoreError::UnknownParameter(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
