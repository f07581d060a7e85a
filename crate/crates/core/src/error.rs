use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("corpus failed validation with {} violation(s): {}", .0.len(), .0.join("; "))]
    Validation(Vec<String>),

    #[error("mention {mention}: span [{start}, {end}) out of bounds for text of length {len}")]
    Offset { mention: String, start: usize, end: usize, len: usize },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("unsupported version {found:?}, expected {expected:?}")]
    Version { found: String, expected: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mention {mention}: {message}")]
    Binding { mention: String, message: String },

    #[error("infeasible generator spec: {0}")]
    Infeasible(String),

    #[error("corpus skeletons differ in sentence(s): {}", .0.join(", "))]
    Skeleton(Vec<String>),

    #[error("training: {0}")]
    Training(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
