use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across simulation, training, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("energy shell is empty or too thin: no admissible second angle after {attempts} draws")]
    EmptyEnergyShell { attempts: usize },

    #[error("trajectory rejection rate {rate:.4} exceeds 0.99 ({rejected} rejected, {accepted} accepted)")]
    RejectionRate {
        rate: f64,
        rejected: usize,
        accepted: usize,
    },

    #[error("bad dataset format: {0}")]
    Format(String),

    #[error("payload length mismatch: header implies {expected} bytes, found {actual}")]
    PayloadLength { expected: u64, actual: u64 },

    #[error("not enough trajectories: need at least {needed}, have {have}")]
    TooFewTrajectories { needed: usize, have: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("training diverged at step {step} (beta = {beta}): loss = {loss}")]
    Diverged { step: u64, beta: f64, loss: f64 },

    #[error("{0}")]
    ModeMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
