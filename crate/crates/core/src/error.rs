use thiserror::Error;

/// Errors raised by the pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs was not met.
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("not found: {0}")]
    NotFound(String),
    /// A uniquely keyed record already exists.
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("embedding provider unavailable: {0}")]
    Provider(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
