use thiserror::Error;

use nv0_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("fit did not converge: {0}")]
    Fit(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Io(_) => 4,
            CliError::Run(_) => 1,
        }
    }

    /// Classify a fit-stage failure.
    pub fn from_fit(e: CoreError) -> Self {
        match e {
            CoreError::NonConvergence { .. }
            | CoreError::Degenerate(_)
            | CoreError::SingularJacobian(_) => CliError::Fit(e.to_string()),
            CoreError::InsufficientData { .. }
            | CoreError::Parse(_)
            | CoreError::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. }
            | CoreError::Domain(_)
            | CoreError::Parse(_)
            | CoreError::Sequence(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Run(other.to_string()),
        }
    }
}
