use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where in an input a parse failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    /// 1-based line number in a text file.
    Line(usize),
    /// Byte offset into a binary file.
    Byte(u64),
    /// 0-based record index.
    Record(usize),
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::Line(l) => write!(f, "line {l}"),
            Position::Byte(b) => write!(f, "byte {b}"),
            Position::Record(r) => write!(f, "record {r}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its allowed domain (tau <= 0, empty input, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a structural invariant (unsorted stream, out-of-bounds event, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// A point lies on or behind the camera plane.
    #[error("cheirality violated: point {index} has non-positive depth {depth}")]
    Cheirality { index: usize, depth: f64 },

    /// The geometry does not determine a unique solution.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at {position}: {message}")]
    Parse { position: Position, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(position: Position, message: impl Into<String>) -> Self {
        Error::Parse {
            position,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
