//! Synthetic tasks with known conditional means, IDX loading and bootstrap replicates.

pub mod idx;

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::rng;

pub const IDX_CLASSES: usize = 10;

/// Data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec {
    /// `y = amplitude * sin(2π * frequency * x) + σ ε`, `x ~ U[0, 1]`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        noise_sigma: f64,
    },
    /// `y = θ*ᵀx + σ ε`, `x ~ N(0, I)`.
    LinearTeacher { theta_star: Vec<f64>, noise_sigma: f64 },
    /// Equal-prior isotropic Gaussian classes.
    GaussianClusters { means: Vec<Vec<f64>>, std: f64 },
    IdxClassification { images: PathBuf, labels: PathBuf },
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec::Sinusoid {
            amplitude: 1.0,
            frequency: 1.0,
            noise_sigma: 0.1,
        }
    }
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Sinusoid { .. } => "sinusoid",
            TaskSpec::LinearTeacher { .. } => "linear-teacher",
            TaskSpec::GaussianClusters { .. } => "gaussian-clusters",
            TaskSpec::IdxClassification { .. } => "idx",
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(
            self,
            TaskSpec::GaussianClusters { .. } | TaskSpec::IdxClassification { .. }
        )
    }

    pub fn has_true_mean(&self) -> bool {
        !matches!(self, TaskSpec::IdxClassification { .. })
    }

    /// Input dimension, when it is known without touching the filesystem.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            TaskSpec::Sinusoid { .. } => Some(1),
            TaskSpec::LinearTeacher { theta_star, .. } => Some(theta_star.len()),
            TaskSpec::GaussianClusters { means, .. } => means.first().map(Vec::len),
            TaskSpec::IdxClassification { .. } => None,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            TaskSpec::Sinusoid { .. } | TaskSpec::LinearTeacher { .. } => 1,
            TaskSpec::GaussianClusters { means, .. } => means.len(),
            TaskSpec::IdxClassification { .. } => IDX_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigma_ok = |s: f64| {
            if s.is_finite() && s >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("noise_sigma must be finite and >= 0, got {s}")))
            }
        };
        match self {
            TaskSpec::Sinusoid {
                amplitude,
                frequency,
                noise_sigma,
            } => {
                sigma_ok(*noise_sigma)?;
                if !amplitude.is_finite() || !frequency.is_finite() {
                    return Err(Error::config("sinusoid amplitude/frequency must be finite"));
                }
            }
            TaskSpec::LinearTeacher {
                theta_star,
                noise_sigma,
            } => {
                sigma_ok(*noise_sigma)?;
                if theta_star.is_empty() {
                    return Err(Error::config("linear teacher needs at least one weight"));
                }
            }
            TaskSpec::GaussianClusters { means, std } => {
                if means.len() < 2 {
                    return Err(Error::config(format!(
                        "gaussian clusters need K >= 2 means, got {}",
                        means.len()
                    )));
                }
                let d = means[0].len();
                if d == 0 || means.iter().any(|m| m.len() != d) {
                    return Err(Error::config("cluster means must share a nonzero dimension"));
                }
                for (a, ma) in means.iter().enumerate() {
                    if means[..a].contains(ma) {
                        return Err(Error::config(format!("cluster mean {a} is a duplicate")));
                    }
                }
                if !(std.is_finite() && *std > 0.0) {
                    return Err(Error::config(format!("cluster std must be > 0, got {std}")));
                }
            }
            TaskSpec::IdxClassification { .. } => {}
        }
        Ok(())
    }
}

/// A labelled sample. Rows of `inputs` and `targets` correspond.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub task: Arc<TaskSpec>,
    pub true_mean_available: bool,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, task: Arc<TaskSpec>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::dim(format!(
                "{} input rows vs {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        let true_mean_available = task.has_true_mean();
        Ok(Dataset {
            inputs,
            targets,
            task,
            true_mean_available,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn input_row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    pub fn target_row(&self, i: usize) -> Vec<f64> {
        self.targets.row(i).iter().copied().collect()
    }

    /// Class index of each row (argmax of the one-hot target).
    pub fn class_labels(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| {
                let row = self.targets.row(i);
                (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect()
    }

    /// Rows gathered in the given order (duplicates allowed).
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(rows),
            targets: self.targets.select_rows(rows),
            task: Arc::clone(&self.task),
            true_mean_available: self.true_mean_available,
        }
    }

    /// ȳ(x) for every row, as an `m × K` matrix.
    pub fn true_means(&self) -> Result<DMatrix<f64>> {
        let k = self.output_dim();
        let mut out = DMatrix::zeros(self.len(), k);
        for i in 0..self.len() {
            let mean = true_mean(&self.task, &self.input_row(i))?;
            out.row_mut(i).copy_from_slice(&mean);
        }
        Ok(out)
    }

    /// One sample per row; input columns `x0..`, target columns `y0..yK-1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.input_dim())
            .map(|c| format!("x{c}"))
            .chain((0..self.output_dim()).map(|k| format!("y{k}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let fields: Vec<String> = self
                .inputs
                .row(i)
                .iter()
                .chain(self.targets.row(i).iter())
                .map(|&v| fmt_f64(v))
                .collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Draws `m` i.i.d. samples from a synthetic task, or a deterministic
/// `m`-row subset of an IDX dataset.
pub fn generate(task: &TaskSpec, m: usize, rng_seed: u64) -> Result<Dataset> {
    task.validate()?;
    if m == 0 {
        return Err(Error::config("dataset size m must be >= 1"));
    }
    let shared = Arc::new(task.clone());
    let mut rng = rng::stream(rng_seed, "generate", &[]);
    match task {
        TaskSpec::Sinusoid {
            amplitude,
            frequency,
            noise_sigma,
        } => {
            let mut x = DMatrix::zeros(m, 1);
            let mut y = DMatrix::zeros(m, 1);
            for i in 0..m {
                let xi: f64 = rng.random();
                let eps: f64 = rng.sample(StandardNormal);
                x[(i, 0)] = xi;
                y[(i, 0)] = amplitude * (2.0 * PI * frequency * xi).sin() + noise_sigma * eps;
            }
            Dataset::new(x, y, shared)
        }
        TaskSpec::LinearTeacher {
            theta_star,
            noise_sigma,
        } => {
            let n = theta_star.len();
            let mut x = DMatrix::zeros(m, n);
            let mut y = DMatrix::zeros(m, 1);
            for i in 0..m {
                let mut dot = 0.0;
                for c in 0..n {
                    let v: f64 = rng.sample(StandardNormal);
                    x[(i, c)] = v;
                    dot += theta_star[c] * v;
                }
                let eps: f64 = rng.sample(StandardNormal);
                y[(i, 0)] = dot + noise_sigma * eps;
            }
            Dataset::new(x, y, shared)
        }
        TaskSpec::GaussianClusters { means, std } => {
            let k = means.len();
            let d = means[0].len();
            let mut x = DMatrix::zeros(m, d);
            let mut y = DMatrix::zeros(m, k);
            for i in 0..m {
                let class = rng.random_range(0..k);
                for c in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    x[(i, c)] = means[class][c] + std * z;
                }
                y[(i, class)] = 1.0;
            }
            Dataset::new(x, y, shared)
        }
        TaskSpec::IdxClassification { images, labels } => load_idx(images, labels, m, rng_seed),
    }
}

/// The conditional mean ȳ(x) = E[y | x] of a synthetic task.
pub fn true_mean(task: &TaskSpec, x: &[f64]) -> Result<Vec<f64>> {
    match task {
        TaskSpec::Sinusoid {
            amplitude,
            frequency,
            ..
        } => {
            check_len(x.len(), 1)?;
            Ok(vec![amplitude * (2.0 * PI * frequency * x[0]).sin()])
        }
        TaskSpec::LinearTeacher { theta_star, .. } => {
            check_len(x.len(), theta_star.len())?;
            Ok(vec![theta_star.iter().zip(x).map(|(t, v)| t * v).sum()])
        }
        TaskSpec::GaussianClusters { means, std } => {
            check_len(x.len(), means[0].len())?;
            // Equal priors: posterior is a softmax of -‖x-μ‖²/(2σ²).
            let logits: Vec<f64> = means
                .iter()
                .map(|mu| {
                    let d2: f64 = mu.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    -d2 / (2.0 * std * std)
                })
                .collect();
            Ok(softmax(&logits))
        }
        TaskSpec::IdxClassification { .. } => Err(Error::Unsupported(
            "true conditional mean is unknown for real (IDX) data".into(),
        )),
    }
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::dim(format!("input has {got} entries, task expects {want}")))
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Bootstrap index vectors over a base dataset of `base_len` rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicateSet {
    pub base_len: usize,
    pub replicates: Vec<Vec<usize>>,
    pub seed: u64,
}

impl ReplicateSet {
    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    pub fn materialize(&self, base: &Dataset, r: usize) -> Dataset {
        base.select(&self.replicates[r])
    }
}

/// `n_replicates` training sets of `m` indices drawn uniformly with replacement.
pub fn bootstrap_replicates(base: &Dataset, n_replicates: usize, seed: u64) -> Result<ReplicateSet> {
    let m = base.len();
    if m == 0 {
        return Err(Error::config("cannot bootstrap an empty dataset"));
    }
    if n_replicates == 0 {
        return Err(Error::config("n_replicates must be >= 1"));
    }
    let replicates = (0..n_replicates)
        .map(|r| {
            let mut rng = rng::stream(seed, "bootstrap-replicate", &[r as u64]);
            (0..m).map(|_| rng.random_range(0..m)).collect()
        })
        .collect();
    Ok(ReplicateSet {
        base_len: m,
        replicates,
        seed,
    })
}

/// Loads `subset` IDX images (pixels scaled to `[0, 1]`) with one-hot labels
/// over ten classes. Rows are chosen without replacement from `seed`.
pub fn load_idx(images_path: &Path, labels_path: &Path, subset: usize, seed: u64) -> Result<Dataset> {
    let images = idx::parse_images(&idx::read_file(images_path)?, images_path)?;
    let labels = idx::parse_labels(&idx::read_file(labels_path)?, labels_path)?;
    if images.count != labels.len() {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!("{} labels for {} images", labels.len(), images.count),
        });
    }
    if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= IDX_CLASSES) {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!("label {bad} outside 0..{IDX_CLASSES}"),
        });
    }
    if subset == 0 || subset > images.count {
        return Err(Error::config(format!(
            "subset {subset} must be in 1..={}",
            images.count
        )));
    }
    let mut rng = rng::stream(seed, "idx-subset", &[]);
    let rows = index::sample(&mut rng, images.count, subset).into_vec();
    let pixels = images.rows * images.cols;
    let mut x = DMatrix::zeros(subset, pixels);
    let mut y = DMatrix::zeros(subset, IDX_CLASSES);
    for (i, &src) in rows.iter().enumerate() {
        for (c, &p) in images.image(src).iter().enumerate() {
            x[(i, c)] = f64::from(p) / 255.0;
        }
        y[(i, usize::from(labels[src]))] = 1.0;
    }
    let task = TaskSpec::IdxClassification {
        images: images_path.to_path_buf(),
        labels: labels_path.to_path_buf(),
    };
    Dataset::new(x, y, Arc::new(task))
}
