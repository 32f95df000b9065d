use std::path::PathBuf;

use thiserror::Error;

use crate::store::FaultStage;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] maskboard_core::Error),
    /// A stored file does not match its registered hash or cannot be parsed.
    #[error("integrity error in {}: {detail}", path.display())]
    Integrity { path: PathBuf, detail: String },
    #[error("unknown artifact kind {0:?}")]
    UnknownKind(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Raised by an armed fault hook in place of a process crash.
    #[error("injected crash at {0:?}")]
    InjectedCrash(FaultStage),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn integrity(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Integrity {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Machine-readable error code used by the HTTP service.
    pub fn code(&self) -> &'static str {
        use maskboard_core::Error as C;
        match self {
            Error::Core(C::Invalid(_)) | Error::UnknownKind(_) => "invalid",
            Error::Core(C::NotFound(_)) => "not_found",
            Error::Core(C::Conflict(_)) => "conflict",
            Error::Core(C::Provider(_)) => "provider_unavailable",
            Error::Core(C::Format(_) | C::Json(_)) => "invalid",
            Error::Core(C::Io(_)) | Error::Integrity { .. } | Error::Io { .. } | Error::InjectedCrash(_) => "integrity",
        }
    }
}

pub(crate) fn not_found(msg: impl Into<String>) -> Error {
    Error::Core(maskboard_core::Error::NotFound(msg.into()))
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Core(maskboard_core::Error::Invalid(msg.into()))
}

pub(crate) fn conflict(msg: impl Into<String>) -> Error {
    Error::Core(maskboard_core::Error::Conflict(msg.into()))
}
