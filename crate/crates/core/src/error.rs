use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid permeameter table `{specimen}` at sample {index}: {reason}")]
    InvalidTable {
        specimen: String,
        index: usize,
        reason: String,
    },

    #[error("argument {value} outside the curve domain (s >= 0 required)")]
    Domain { value: f64 },

    #[error("ensemble needs at least 2 curves, got {0}")]
    InsufficientEnsemble(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("material model construction failed: {0}")]
    ModelConstruction(String),

    #[error("parameter vector outside the admissible box in component {component}: {value} not in [{lower}, {upper}]")]
    OutOfBox {
        component: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("Newton iteration did not converge after {} steps (last relative residual {:.3e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    Divergence { history: Vec<f64> },

    #[error("point ({x}, {y}) is not inside the mesh")]
    Location { x: f64, y: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("acceptance threshold not met: {0}")]
    Threshold(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
