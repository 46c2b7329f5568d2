use thiserror::Error;

/// Errors produced by basis construction, sampling, design selection, the
/// sparse solvers, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point outside the polynomial domain: {0}")]
    Domain(String),

    #[error("basis size C({n},{k}) overflows the safe integer range")]
    BasisTooLarge { n: usize, k: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing report cells: {0}")]
    MissingCells(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
