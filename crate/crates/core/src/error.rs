use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single ensemble member that failed to train.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberFailure {
    pub replicate: usize,
    pub seed_index: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Σ is singular where an invertible covariance was required.
    #[error("regime error: rank {rank} < {dim} parameters; use the over-parameterized (gradient descent) path")]
    Regime { rank: usize, dim: usize },

    #[error("gradient descent did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("probe vector has no null-space component")]
    DegenerateProbe,

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("step-size tuning failed for width {width}: every candidate diverged")]
    Tuning { width: usize },

    #[error("ensemble error: {} member(s) failed, first at (s={}, o={}): {}",
        .0.len(), .0[0].replicate, .0[0].seed_index, .0[0].message)]
    Ensemble(Vec<MemberFailure>),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
