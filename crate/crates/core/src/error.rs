use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("dimension mismatch: {left_n}x{left_n}/K={left_k} vs {right_n}x{right_n}/K={right_k}")]
    DimensionMismatch {
        left_n: usize,
        left_k: usize,
        right_n: usize,
        right_k: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
