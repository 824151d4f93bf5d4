use thiserror::Error;

use crate::checkpoint::CheckpointError;

/// Command failure, grouped by process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration. Exit 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or mismatched input. Exit 2.
    #[error("{0}")]
    Data(String),
    /// Divergence or a failed gradient check. Exit 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<secn_core::Error> for CliError {
    fn from(e: secn_core::Error) -> Self {
        use secn_core::Error as E;
        match e {
            E::InvalidConfig(_) => CliError::Usage(e.to_string()),
            E::Diverged { .. } | E::NonFiniteGradient { .. } | E::NonFiniteScore(_) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(format!("checkpoint: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
