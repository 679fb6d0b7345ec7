//! Bias-variance measurement for neural networks and linear models.
//!
//! - [`data`]: synthetic tasks with known conditional means, IDX loading,
//!   bootstrap replicates.
//! - [`linear`]: fixed-design least squares, the closed-form variance of its
//!   predictions in both parameter regimes, and Monte Carlo checks.
//! - [`net`]: single-hidden-layer networks trained with momentum.
//! - [`lens`]: ensembles over (replicate × seed) grids and the bias, variance
//!   and total-variance estimators built on them.

pub mod data;
pub mod error;
pub mod lens;
pub mod linear;
pub mod net;
pub mod rng;
pub mod stats;

pub use data::{bootstrap_replicates, generate, load_idx, true_mean, Dataset, ReplicateSet, TaskSpec};
pub use error::{Error, MemberFailure, Result};
pub use lens::{
    bias_variance, bootstrap_ci, classification_risk_check, run_ensemble, run_ensemble_with,
    total_variance_split, BiasVarianceReport, DecompositionReport, EnsembleSpec, Interval, Learner,
    Mode, MlpLearner, PredictionTensor, Provenance,
};
pub use linear::{LinearFixedDesign, LinearSolution};
pub use net::{Head, InitSpec, MlpModel, TrainConfig};

/// Float formatting used by every CSV writer: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
