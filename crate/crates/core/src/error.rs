use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid tropical value {0} (NaN and -inf are not allowed)")]
    InvalidValue(f64),

    #[error("dead decoding front: every state has infinite cost")]
    DeadFront,

    #[error("lattice is empty")]
    EmptyLattice,

    #[error("prune outcome has an empty support")]
    EmptySupport,

    #[error("volume metric is undefined for an unbounded threshold")]
    UnboundedThreshold,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("observation sequence has {found} frames, need at least {needed}")]
    ShortObservations { needed: usize, found: usize },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed trace or traffic file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration and validation failures, as opposed to runtime faults.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Domain(_) | Error::InvalidValue(_)
        )
    }
}
