use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    /// The constraint direction is undefined because the robot sits on the
    /// source mean.
    #[error("degenerate direction: point coincides with {0}")]
    DegenerateDirection(&'static str),

    #[error("covariance is not positive semi-definite: {0}")]
    NotPsd(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    /// Scenario validation failure; the first field is the dotted path of the
    /// offending key.
    #[error("invalid scenario at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
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
