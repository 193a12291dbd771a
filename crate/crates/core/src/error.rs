use thiserror::Error;

/// Errors produced by the renderer and toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An operation was invoked before its required state was prepared.
    #[error("invalid state: {0}")]
    InvalidState(String),
    /// A requested size or allocation exceeds configured limits.
    #[error("resource limit: {0}")]
    Resource(String),
    /// A file could not be parsed in the expected format.
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
