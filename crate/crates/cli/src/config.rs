//! Experiment configuration files (TOML).
//!
//! A sweep config has `[experiment]`, `[task]`, `[train]` and optional
//! `[tune]`, `[bootstrap]` and `[function_grid]` sections. A linear-oracle
//! config has a single `[linear]` section. See `configs/` for examples.

use std::path::{Path, PathBuf};

use bvx_core::net::{EarlyStop, Optimizer, DEFAULT_MOMENTUM};
use bvx_core::{Head, Mode, TaskSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Sinusoid {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default = "default_sigma")]
        noise_sigma: f64,
    },
    LinearTeacher {
        theta_star: Vec<f64>,
        noise_sigma: f64,
    },
    GaussianClusters {
        means: Vec<Vec<f64>>,
        std: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn default_sigma() -> f64 {
    0.1
}

impl TaskConfig {
    pub fn to_spec(&self) -> TaskSpec {
        match self.clone() {
            TaskConfig::Sinusoid {
                amplitude,
                frequency,
                noise_sigma,
            } => TaskSpec::Sinusoid {
                amplitude,
                frequency,
                noise_sigma,
            },
            TaskConfig::LinearTeacher {
                theta_star,
                noise_sigma,
            } => TaskSpec::LinearTeacher {
                theta_star,
                noise_sigma,
            },
            TaskConfig::GaussianClusters { means, std } => TaskSpec::GaussianClusters { means, std },
            TaskConfig::Idx { images, labels, .. } => TaskSpec::IdxClassification { images, labels },
        }
    }

    /// The task the test set is drawn from (differs only for IDX files).
    pub fn test_spec(&self) -> TaskSpec {
        match self {
            TaskConfig::Idx {
                test_images,
                test_labels,
                ..
            } => TaskSpec::IdxClassification {
                images: test_images.clone(),
                labels: test_labels.clone(),
            },
            _ => self.to_spec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    LabelAsMean,
    OracleMean,
}

impl From<ModeConfig> for Mode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::LabelAsMean => Mode::LabelAsMean,
            ModeConfig::OracleMean => Mode::OracleMean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerConfig {
    SgdMomentum,
    BatchGd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepOverride {
    pub width: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub optimizer: OptimizerConfig,
    pub step_size: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_overrides: Vec<StepOverride>,
}

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}

impl TrainSection {
    pub fn base_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: match self.optimizer {
                OptimizerConfig::SgdMomentum => Optimizer::SgdMomentum,
                OptimizerConfig::BatchGd => Optimizer::BatchGd,
            },
            step_size: self.step_size,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            early_stop: self.early_stop_fraction.map(|f| EarlyStop {
                validation_fraction: f,
                patience: self.early_stop_patience.unwrap_or(50),
            }),
        }
    }

    pub fn override_for(&self, width: usize) -> Option<f64> {
        self.step_overrides.iter().find(|o| o.width == width).map(|o| o.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub candidates: Vec<f64>,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Fresh validation draws from the task. Replaces the split of the
    /// training set when given; synthetic tasks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_size: Option<usize>,
    /// Initializations averaged per candidate.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    3
}

fn default_validation_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

fn default_level() -> f64 {
    0.99
}

fn default_resamples() -> usize {
    1000
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            level: default_level(),
            resamples: default_resamples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionGridSection {
    pub emit: bool,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub master_seed: u64,
    pub widths: Vec<usize>,
    #[serde(default = "default_grid")]
    pub n_s: usize,
    #[serde(default = "default_grid")]
    pub n_o: usize,
    #[serde(default = "default_mode")]
    pub mode: ModeConfig,
    pub train_size: usize,
    pub test_size: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_grid() -> usize {
    10
}

fn default_mode() -> ModeConfig {
    ModeConfig::LabelAsMean
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub task: TaskConfig,
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneSection>,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_grid: Option<FunctionGridSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_toml(&read_config(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn head(&self) -> Head {
        if self.task.to_spec().is_classification() {
            Head::Softmax
        } else {
            Head::Linear
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let e = &self.experiment;
        let bad = |m: String| Err(CliError::Config(m));
        if e.widths.is_empty() || e.widths[0] == 0 {
            return bad("widths must be non-empty and >= 1".into());
        }
        if e.widths.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("widths must be strictly increasing, got {:?}", e.widths));
        }
        if e.n_s < 2 || e.n_o < 2 {
            return bad(format!("n_s and n_o must be >= 2, got {} and {}", e.n_s, e.n_o));
        }
        if e.train_size == 0 || e.test_size < 2 {
            return bad("train_size must be >= 1 and test_size >= 2".into());
        }
        if self.train.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if let Some(t) = &self.tune {
            if t.candidates.is_empty() || t.candidates.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return bad("tune candidates must be positive step sizes".into());
            }
            if t.repeats == 0 {
                return bad("tune repeats must be >= 1".into());
            }
            if t.validation_size == Some(0) {
                return bad("tune validation_size must be >= 1".into());
            }
            if t.validation_size.is_some() && matches!(self.task, TaskConfig::Idx { .. }) {
                return bad("tune validation_size needs a synthetic task".into());
            }
        }
        if self.bootstrap.resamples < 100 {
            return bad("bootstrap resamples must be >= 100".into());
        }
        if let Some(g) = self.function_grid {
            if g.emit && g.resolution < 2 {
                return bad("function grid resolution must be >= 2".into());
            }
        }
        if let TaskConfig::Idx { .. } = self.task {
            if self.experiment.mode == ModeConfig::OracleMean {
                return bad("oracle-mean mode is unsupported for IDX data".into());
            }
        }
        self.task
            .to_spec()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train
            .base_config()
            .validate(self.experiment.train_size)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Hex digest of the canonical serialization and the crate version.
    pub fn digest(&self) -> String {
        digest_text(&self.to_toml())
    }
}

pub(crate) fn digest_text(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    pub seed: u64,
    pub sigma_eps: f64,
    pub under_m: usize,
    pub under_dims: Vec<usize>,
    pub over_m: usize,
    pub over_dims: Vec<usize>,
    pub pad_base_dim: usize,
    pub pad_dims: Vec<usize>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    pub mc_draws_under: usize,
    pub mc_draws_over: usize,
    /// Allowed Monte Carlo deviation, in standard errors.
    #[serde(default = "default_z")]
    pub z_tolerance: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_probes() -> usize {
    5
}

fn default_z() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearOracleConfig {
    pub linear: LinearSection,
}

impl LinearOracleConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: LinearOracleConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_toml(&read_config(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let l = &self.linear;
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if !(l.sigma_eps.is_finite() && l.sigma_eps >= 0.0) {
            return bad("sigma_eps must be >= 0");
        }
        if l.under_dims.iter().any(|&n| n == 0 || n > l.under_m) {
            return bad("under_dims must be in 1..=under_m");
        }
        if l.over_dims.iter().any(|&n| n <= l.over_m) {
            return bad("over_dims must exceed over_m");
        }
        if l.pad_base_dim <= l.over_m || l.pad_dims.iter().any(|&n| n <= l.pad_base_dim) {
            return bad("pad_base_dim must exceed over_m and pad_dims must exceed pad_base_dim");
        }
        if l.probes == 0 || l.mc_draws_under < 2 || l.mc_draws_over < 2 {
            return bad("probes and Monte Carlo draw counts must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"
[experiment]
name = "smoke"
master_seed = 7
widths = [5, 20]
n_s = 2
n_o = 2
mode = "oracle-mean"
train_size = 20
test_size = 30

[task]
kind = "sinusoid"
noise_sigma = 0.1

[train]
optimizer = "batch-gd"
step_size = 0.05
epochs = 10
step_overrides = [{ width = 20, step = 0.01 }]

[function_grid]
emit = true
resolution = 11
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(SWEEP).unwrap();
        assert_eq!(c.train.momentum, 0.9);
        assert_eq!(c.bootstrap.level, 0.99);
        assert_eq!(c.train.override_for(20), Some(0.01));
        assert_eq!(c.train.override_for(5), None);
        assert_eq!(c.head(), Head::Linear);
    }

    #[test]
    fn round_trips_losslessly() {
        let c = ExperimentConfig::from_toml(SWEEP).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.digest(), again.digest());
    }

    #[test]
    fn widths_must_increase() {
        let text = SWEEP.replace("widths = [5, 20]", "widths = [20, 5]");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = SWEEP.replace("widths = [5, 20]", "widths = [0, 5]");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = SWEEP.replace("epochs = 10", "epochs = 10\nlearning_rate = 3");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::from_toml(SWEEP).unwrap();
        let mut b = a.clone();
        b.experiment.master_seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }
}
