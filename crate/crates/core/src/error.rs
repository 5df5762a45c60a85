use thiserror::Error;

/// Errors raised by operators, proximal maps, solvers and generators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("operator too large to densify: {rows}x{cols} exceeds {limit} entries")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },
    #[error("root bracketing failed in {context} after {iterations} iterations")]
    BracketFailure {
        context: &'static str,
        iterations: usize,
    },
    #[error("non-finite iterate in {solver} at iteration {iteration}")]
    NonFinite {
        solver: &'static str,
        iteration: usize,
    },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
