use std::path::{Path, PathBuf};

/// Failures of review operations. Each maps to one HTTP status and a stable
/// error code.
#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    /// The project's state does not allow the operation.
    #[error("{0}")]
    Conflict(String),
    /// The operation needs an explicit `confirm` flag.
    #[error("{0}")]
    ConfirmRequired(String),
    #[error("{0}")]
    Exists(String),
    #[error(transparent)]
    Core(#[from] anonymise_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

pub type Result<T, E = ReviewError> = std::result::Result<T, E>;

impl ReviewError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ReviewError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ReviewError::NotFound(_) => "not_found",
            ReviewError::Invalid(_) => "invalid",
            ReviewError::Conflict(_) => "conflict",
            ReviewError::ConfirmRequired(_) => "confirm_required",
            ReviewError::Exists(_) => "exists",
            ReviewError::Core(anonymise_core::Error::Io { .. }) => "input_missing",
            ReviewError::Core(_) => "invalid_input",
            ReviewError::Io { .. } => "io",
            ReviewError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ReviewError::NotFound(_) => 404,
            ReviewError::Invalid(_) | ReviewError::Core(_) => 400,
            ReviewError::Conflict(_) | ReviewError::ConfirmRequired(_) | ReviewError::Exists(_) => 409,
            ReviewError::Io { .. } | ReviewError::Internal(_) => 500,
        }
    }
}
