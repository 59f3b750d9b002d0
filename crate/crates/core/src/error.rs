use std::path::PathBuf;

use thiserror::Error;

use crate::snowball::SnowballReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("likelihood returned NaN at theta = {theta:?}")]
    NanLikelihood { theta: Vec<f64> },

    #[error(
        "constrained-prior sampler failed above threshold {l_min:e} after {attempts} attempts"
    )]
    LrpsFailure { l_min: f64, attempts: usize },

    #[error("unknown problem `{0}` (expected one of: rosenbrock, gaussian, constant)")]
    UnknownProblem(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format version mismatch: expected `{expected}`, found `{found}`")]
    VersionMismatch { expected: String, found: String },

    #[error("checkpoint checksum mismatch in section `{section}`")]
    Checksum { section: String },

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("outer iteration {} aborted: {source}", report.outer_iteration)]
    Aborted {
        report: Box<SnowballReport>,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
