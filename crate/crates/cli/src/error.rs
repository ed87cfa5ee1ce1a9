use mgmp::MpError;
use thiserror::Error;

/// Command failure carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Compatibility(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Compatibility(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Format(_) => 5,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<MpError> for CliError {
    fn from(e: MpError) -> Self {
        let msg = e.to_string();
        match e {
            MpError::Parameter(_) | MpError::Compatibility(_) | MpError::Dimension(_) => CliError::Compatibility(msg),
            MpError::Cache(_) => CliError::Io(msg),
            MpError::Index(_)
            | MpError::DegeneratePair(_)
            | MpError::NotSpanning(_)
            | MpError::SizeGuard(_)
            | MpError::Stopped(_) => CliError::Numeric(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
