use thiserror::Error;

/// A syntax or resolution error in one of the text formats, with a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),

    #[error("invalid input: {0}")]
    Invalid(String),

    /// Explicit exploration would need more than `cap` time-indexed states.
    #[error("refused: more than {cap} states would be explored")]
    CapExceeded { cap: usize },

    #[error("synthesis refused: {0}")]
    SynthesisRefused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
