use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("CFL violation at t = {time}: dt*|u|/h = {cfl:.4} exceeds {limit}")]
    CflViolation { time: f64, cfl: f64, limit: f64 },

    #[error(
        "flow map not invertible: Newton residual {residual:.3e} > {tol:.3e} after {iterations} iterations \
         (reduce dt or reset_interval)"
    )]
    NonInvertible { residual: f64, tol: f64, iterations: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("bad snapshot file {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
