use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapfError {
    /// Malformed input text. `line` is 1-based.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input that violates an instance invariant. `row` is 1-based.
    #[error("validation error on row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MapfError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        MapfError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn validation(row: usize, message: impl Into<String>) -> Self {
        MapfError::Validation {
            row,
            message: message.into(),
        }
    }

    pub(crate) fn usage(message: impl Into<String>) -> Self {
        MapfError::Usage(message.into())
    }
}

pub type Result<T> = std::result::Result<T, MapfError>;
