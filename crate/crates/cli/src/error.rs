use pcnlab::PcnError;
use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or out-of-range configuration (exit 2).
    #[error("config error: {0}")]
    Config(String),

    /// A run produced non-finite values (exit 3).
    #[error("diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<PcnError> for CliError {
    fn from(e: PcnError) -> Self {
        match e {
            PcnError::InvalidConfig(_)
            | PcnError::ParameterGuard { .. }
            | PcnError::DimensionMismatch { .. }
            | PcnError::LayerOutOfRange { .. } => CliError::Config(e.to_string()),
            PcnError::NonFinite(msg) => CliError::Diverged(msg),
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.into())
    }
}
