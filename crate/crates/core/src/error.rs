use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    /// Short machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite { .. } | Error::Numeric(_) => "numeric",
            Error::Argument(_) => "argument",
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
