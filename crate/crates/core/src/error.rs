use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request exceeds a built-in cost guard.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A finite bit source ran out before the requested output was produced.
    #[error("keystream exhausted after {produced} of {requested} bits")]
    Exhausted { produced: usize, requested: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
