use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Each variant maps onto one CLI exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parameter validation failed: {0}")]
    Validation(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("numerical blow-up: {0}")]
    Blowup(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Process exit code used by the `wavelab` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged(_) => 3,
            Error::Blowup(_) => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
