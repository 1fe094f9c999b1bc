use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported graph: {0}")]
    UnsupportedGraph(String),
    #[error("{what} exceeds the limit of {limit}: {hint}")]
    TooLarge {
        what: &'static str,
        limit: usize,
        hint: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
