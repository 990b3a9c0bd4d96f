//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by the library.
///
/// Variants map onto the CLI exit-code contract: `Config` is a usage error,
/// `Data`/`Io` are data errors, `Shape`/`Numeric` indicate an invalid
/// computation request or a failed numerical invariant.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration value or flag combination.
    Config(String),
    /// Malformed or inconsistent input data (files, manifests, sequences).
    Data(String),
    /// Underlying I/O failure with the path that caused it.
    Io { path: String, source: std::io::Error },
    /// Tensor/layer shape incompatibility; names both shapes.
    Shape(String),
    /// Numerical error state (non-finite values, backward misuse, self-test failure).
    Numeric(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
