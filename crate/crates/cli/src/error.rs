use thiserror::Error;

use rabi_stark::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(CoreError),
    #[error("convergence check failed: {0}")]
    Convergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

/// Invalid inputs that only the library could detect are configuration
/// errors; everything else is a numerical failure.
impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. }
            | CoreError::FockIndexOutOfRange { .. }
            | CoreError::UnsupportedPhases(_)
            | CoreError::UnbalancedDrives { .. }
            | CoreError::Aliasing { .. } => CliError::Config(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}
