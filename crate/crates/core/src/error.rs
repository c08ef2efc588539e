use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
    #[error("unknown case id {0:?}")]
    UnknownCase(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    UnknownLeaf(#[from] crate::case_model::UnknownLeaf),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular normal matrix; collinear columns: {}", .0.join(", "))]
    Singular(Vec<String>),
    #[error("cities missing from coordinates file: {}", .0.join(", "))]
    UnresolvedCities(Vec<String>),
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
