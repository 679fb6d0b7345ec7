//! Prediction ensembles over (bootstrap replicate × optimization seed) grids
//! and the estimators computed from them.

mod estimators;

pub use estimators::{
    bias_variance, bootstrap_ci, bootstrap_ci_with, bootstrap_resamples, classification_risk_check,
    total_variance_split, BiasVarianceReport, DecompositionReport, Interval, Mode, Pointwise,
    RiskCheck,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{bootstrap_replicates, Dataset};
use crate::error::{Error, MemberFailure, Result};
use crate::linear::{solve_closed_form, solve_gd, GdOptions, LinearFixedDesign, LinearSolution};
use crate::net::{init, train, Head, InitSpec, MlpModel, TrainConfig};
use crate::rng;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub task: String,
    pub width: Option<usize>,
    pub config_digest: String,
}

/// Predictions indexed `(s, o, i, k)`: replicate, seed, test point, output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    n_s: usize,
    n_o: usize,
    points: usize,
    outputs: usize,
    values: Vec<f64>,
    pub provenance: Provenance,
}

impl PredictionTensor {
    pub fn new(
        n_s: usize,
        n_o: usize,
        points: usize,
        outputs: usize,
        values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if n_s == 0 || n_o == 0 || points == 0 || outputs == 0 {
            return Err(Error::dim("prediction tensor axes must be non-empty"));
        }
        if values.len() != n_s * n_o * points * outputs {
            return Err(Error::dim(format!(
                "{} values for a {n_s}x{n_o}x{points}x{outputs} tensor",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite prediction at flat index {pos}")));
        }
        Ok(PredictionTensor {
            n_s,
            n_o,
            points,
            outputs,
            values,
            provenance,
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_o(&self) -> usize {
        self.n_o
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// The K-vector at `(s, o, i)`.
    pub fn at(&self, s: usize, o: usize, i: usize) -> &[f64] {
        let start = ((s * self.n_o + o) * self.points + i) * self.outputs;
        &self.values[start..start + self.outputs]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy with replicate and seed axes reordered.
    pub fn permuted(&self, s_perm: &[usize], o_perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &s in s_perm {
            for &o in o_perm {
                for i in 0..self.points {
                    values.extend_from_slice(self.at(s, o, i));
                }
            }
        }
        PredictionTensor {
            values,
            ..self.clone()
        }
    }
}

pub trait Predictor {
    /// `T × K` predictions for the rows of `inputs`.
    fn predict(&self, inputs: &DMatrix<f64>) -> DMatrix<f64>;
}

impl Predictor for MlpModel {
    fn predict(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        MlpModel::predict(self, inputs)
    }
}

impl Predictor for LinearSolution {
    fn predict(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let col: DVector<f64> = inputs * &self.theta_hat;
        DMatrix::from_column_slice(col.len(), 1, col.as_slice())
    }
}

/// Something that turns a training set and a seed into a predictor.
pub trait Learner: Sync {
    type Model: Predictor + Send;
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Self::Model>;
}

#[derive(Debug, Clone)]
pub struct MlpLearner {
    pub width: usize,
    pub head: Head,
    pub config: TrainConfig,
}

impl Learner for MlpLearner {
    type Model = MlpModel;

    fn fit(&self, data: &Dataset, seed: u64) -> Result<MlpModel> {
        let model = init(
            self.width,
            data.input_dim(),
            data.output_dim(),
            self.head,
            &InitSpec {
                seed: rng::derive_seed(seed, "member-init", &[]),
            },
        )?;
        Ok(train(model, data, &self.config, rng::derive_seed(seed, "member-train", &[]))?.model)
    }
}

/// Closed-form least squares on the first target column; ignores the seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastSquaresLearner;

impl Learner for LeastSquaresLearner {
    type Model = LinearSolution;

    fn fit(&self, data: &Dataset, _seed: u64) -> Result<LinearSolution> {
        let design = LinearFixedDesign::new(data.inputs.clone(), DVector::zeros(data.input_dim()), 0.0)?;
        solve_closed_form(&design, &data.targets.column(0).into_owned())
    }
}

/// Gradient descent from θ₀ ~ N(0, I/N) drawn from the seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientDescentLearner;

impl Learner for GradientDescentLearner {
    type Model = LinearSolution;

    fn fit(&self, data: &Dataset, seed: u64) -> Result<LinearSolution> {
        let design = LinearFixedDesign::new(data.inputs.clone(), DVector::zeros(data.input_dim()), 0.0)?;
        let theta_0 = design.sample_init(&mut rng::stream(seed, "theta-0", &[]));
        let opts = GdOptions::for_design(&design);
        solve_gd(&design, &data.targets.column(0).into_owned(), &theta_0, &opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub n_s: usize,
    pub n_o: usize,
    pub master_seed: u64,
}

impl EnsembleSpec {
    pub fn member_seed(&self, s: usize, o: usize) -> u64 {
        rng::derive_seed(self.master_seed, "member", &[s as u64, o as u64])
    }
}

/// Trains `n_s × n_o` members on bootstrap replicates of `base`
/// and records their predictions on each evaluation input set.
pub fn run_ensemble<L: Learner>(
    learner: &L,
    base: &Dataset,
    spec: &EnsembleSpec,
    eval: &[&DMatrix<f64>],
    provenance: &Provenance,
) -> Result<Vec<PredictionTensor>> {
    check_grid(spec)?;
    let replicates = bootstrap_replicates(
        base,
        spec.n_s,
        rng::derive_seed(spec.master_seed, "replicates", &[]),
    )?;
    run_ensemble_with(
        learner,
        |s| Ok(replicates.materialize(base, s)),
        spec,
        eval,
        provenance,
    )
}

fn check_grid(spec: &EnsembleSpec) -> Result<()> {
    if spec.n_s < 2 || spec.n_o < 2 {
        return Err(Error::config(format!(
            "ensemble grid needs n_S, n_O >= 2, got {}x{}",
            spec.n_s, spec.n_o
        )));
    }
    Ok(())
}

/// Like [`run_ensemble`], with replicate `s`'s training set supplied by `training_set`.
pub fn run_ensemble_with<L, F>(
    learner: &L,
    training_set: F,
    spec: &EnsembleSpec,
    eval: &[&DMatrix<f64>],
    provenance: &Provenance,
) -> Result<Vec<PredictionTensor>>
where
    L: Learner,
    F: Fn(usize) -> Result<Dataset> + Sync,
{
    check_grid(spec)?;
    let sets: Vec<Dataset> = (0..spec.n_s)
        .into_par_iter()
        .map(&training_set)
        .collect::<Result<_>>()?;
    let cells: Vec<Result<Vec<DMatrix<f64>>>> = (0..spec.n_s * spec.n_o)
        .into_par_iter()
        .map(|cell| {
            let (s, o) = (cell / spec.n_o, cell % spec.n_o);
            let model = learner.fit(&sets[s], spec.member_seed(s, o))?;
            Ok(eval.iter().map(|x| model.predict(x)).collect())
        })
        .collect();

    let failures: Vec<MemberFailure> = cells
        .iter()
        .enumerate()
        .filter_map(|(cell, r)| {
            r.as_ref().err().map(|e| MemberFailure {
                replicate: cell / spec.n_o,
                seed_index: cell % spec.n_o,
                message: e.to_string(),
            })
        })
        .collect();
    if !failures.is_empty() {
        return Err(Error::Ensemble(failures));
    }
    let cells: Vec<Vec<DMatrix<f64>>> = cells.into_iter().map(|r| r.expect("checked")).collect();

    eval.iter()
        .enumerate()
        .map(|(e, x)| {
            let points = x.nrows();
            let outputs = cells[0][e].ncols();
            let mut values = Vec::with_capacity(cells.len() * points * outputs);
            for cell in &cells {
                let pred = &cell[e];
                for i in 0..points {
                    values.extend(pred.row(i).iter());
                }
            }
            PredictionTensor::new(spec.n_s, spec.n_o, points, outputs, values, provenance.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, TaskSpec};

    #[test]
    fn single_cell_grids_rejected() {
        let data = generate(&TaskSpec::default(), 10, 0).unwrap();
        let spec = EnsembleSpec {
            n_s: 1,
            n_o: 1,
            master_seed: 0,
        };
        let err = run_ensemble(&LeastSquaresLearner, &data, &spec, &[&data.inputs], &Provenance::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn closed_form_members_ignore_the_seed() {
        let task = TaskSpec::LinearTeacher {
            theta_star: vec![1.0, -1.0],
            noise_sigma: 0.5,
        };
        let data = generate(&task, 30, 1).unwrap();
        let test = generate(&task, 7, 2).unwrap();
        let spec = EnsembleSpec {
            n_s: 3,
            n_o: 4,
            master_seed: 9,
        };
        let t = &run_ensemble(&LeastSquaresLearner, &data, &spec, &[&test.inputs], &Provenance::default())
            .unwrap()[0];
        for s in 0..3 {
            for o in 1..4 {
                for i in 0..7 {
                    assert_eq!(t.at(s, o, i), t.at(s, 0, i));
                }
            }
        }
        assert_ne!(t.at(0, 0, 0), t.at(1, 0, 0));
        assert_eq!(total_variance_split(t).unwrap().var_optimization, 0.0);
    }

    #[test]
    fn member_failures_are_listed() {
        let data = generate(&TaskSpec::default(), 20, 0).unwrap();
        let learner = MlpLearner {
            width: 8,
            head: Head::Linear,
            config: TrainConfig::batch_gd(80.0, 500),
        };
        let spec = EnsembleSpec {
            n_s: 2,
            n_o: 2,
            master_seed: 0,
        };
        match run_ensemble(&learner, &data, &spec, &[&data.inputs], &Provenance::default()) {
            Err(Error::Ensemble(f)) => {
                assert_eq!(f.len(), 4);
                assert_eq!((f[3].replicate, f[3].seed_index), (1, 1));
            }
            other => panic!("expected ensemble error, got {other:?}"),
        }
    }

    #[test]
    fn tensor_rejects_non_finite() {
        let err = PredictionTensor::new(1, 2, 1, 1, vec![0.0, f64::NAN], Provenance::default());
        assert!(matches!(err, Err(Error::Contract(_))));
    }
}
