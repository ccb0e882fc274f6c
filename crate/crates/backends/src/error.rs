use thiserror::Error;

/// Failure talking to a model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("{0} is not supported by this backend")]
    Unsupported(&'static str),
    #[error("fatal backend error: {0}")]
    Fatal(String),
}

impl BackendError {
    /// Worth retrying: network trouble, timeouts, rate limits and server errors.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout => true,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            BackendError::Unsupported(_) | BackendError::Fatal(_) => false,
        }
    }

    /// Errors that should stop a whole stage instead of dead-lettering one record.
    pub fn is_fatal(&self) -> bool {
        match self {
            BackendError::Fatal(_) | BackendError::Unsupported(_) => true,
            BackendError::Http { status, .. } => matches!(status, 401 | 403 | 404),
            _ => false,
        }
    }
}

/// Failure of a role operation: the backend failed or its reply was unusable.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoleError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed model output: {0}")]
    MalformedOutput(String),
    #[error("no score in judge reply {0:?}")]
    UnparseableScore(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("embedding dimension changed from {expected} to {got}")]
    DimensionDrift { expected: usize, got: usize },
}

impl RoleError {
    /// Short machine-readable reason for dead-letter records.
    pub fn reason(&self) -> &'static str {
        match self {
            RoleError::Backend(_) => "backend_error",
            RoleError::MalformedOutput(_) => "malformed_output",
            RoleError::UnparseableScore(_) => "unparseable_score",
            RoleError::Precondition(_) => "precondition",
            RoleError::DimensionDrift { .. } => "dimension_drift",
        }
    }

    pub fn is_fatal(&self) -> bool {
        match self {
            RoleError::Backend(e) => e.is_fatal(),
            RoleError::DimensionDrift { .. } => true,
            _ => false,
        }
    }
}
