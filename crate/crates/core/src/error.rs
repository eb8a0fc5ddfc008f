use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("invalid box {id}: {reason}")]
    InvalidBox { id: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: malformed XML: {message}")]
    Xml {
        path: PathBuf,
        line: u32,
        column: u32,
        message: String,
    },

    #[error("{path}: element <{element}> id={id}: {message}")]
    Field {
        path: PathBuf,
        element: String,
        id: String,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dangling references in pair records:\n{}", .0.join("\n"))]
    DanglingPairs(Vec<String>),

    #[error("duplicate id {id} on page {page} of {book}")]
    DuplicateId { book: String, page: u32, id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle scale exceeded: {0} frames (max 8)")]
    OracleScale(usize),

    #[error("unknown id {id} in score matrix")]
    UnknownId { id: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
