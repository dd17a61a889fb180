use std::io;

use thiserror::Error;
use transient_core::Error as CoreError;

/// Failures of a CLI run, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed, unknown or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 0 ok, 1 other failure, 2 config, 3 numeric blow-up, 4 precondition.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_)
                | CoreError::InvalidParams { .. }
                | CoreError::Unknown(_)
                | CoreError::DimensionMismatch { .. } => 2,
                CoreError::NonFiniteState { .. } | CoreError::DomainEscape { .. } => 3,
                CoreError::CandidateNotInXv { .. } => 4,
                CoreError::NotApplicable(_) | CoreError::ConvergenceFailure { .. } => 1,
            },
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}
