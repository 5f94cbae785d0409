use std::path::PathBuf;

use thiserror::Error;

use crate::model::FileId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("file id {file} is outside the catalog of {n_files} files")]
    UnknownFile { file: FileId, n_files: usize },

    #[error("score of file {file} would decrease from {old} to {new}")]
    ScoreDecrease { file: FileId, old: f64, new: f64 },

    #[error("step {got} received out of order, expected step {expected}")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("trace {0} contains no requests")]
    EmptyTrace(PathBuf),

    #[error("checkpoint grids differ between runs")]
    MismatchedGrid,

    #[error("run with seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
