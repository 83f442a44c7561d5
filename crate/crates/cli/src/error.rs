use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Library(#[from] mlreg::Error),

    #[error("invalid arguments: {0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Short machine-readable category for the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Library(mlreg::Error::Parse { .. }) | CliError::Parse { .. } => "parse",
            CliError::Library(mlreg::Error::InvalidConfig(_)) | CliError::Usage(_) => "usage",
            CliError::Library(mlreg::Error::Unsupported(_)) => "unsupported",
            CliError::Library(mlreg::Error::Io(_)) | CliError::Io { .. } => "io",
            CliError::Library(mlreg::Error::Archive(_)) => "archive",
            CliError::Library(_) => "model",
            CliError::Json(_) => "output",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
