use std::path::PathBuf;

use thiserror::Error;

use crate::norms::NormPair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("input contains a non-finite value at index {index}")]
    NonFiniteInput { index: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteMatrix { row: usize, col: usize },

    #[error("observed value {0} is not finite")]
    NonFiniteValue(f64),

    #[error("unsupported norm pair {0}: only alpha = 1, beta = inf, or (2, 2) have closed forms")]
    UnsupportedNormPair(NormPair),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("partition of {k}^{dim} regions exceeds the limit of {limit}")]
    PartitionTooLarge { k: usize, dim: usize, limit: u64 },

    #[error("grid of {points_per_dim}^{dim} points exceeds the limit of {limit}")]
    GridTooLarge {
        points_per_dim: usize,
        dim: usize,
        limit: u64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged: loss became {loss} at epoch {epoch}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("invalid data file {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
