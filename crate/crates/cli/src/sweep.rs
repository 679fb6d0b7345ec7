//! `bvx sweep`: one ensemble per configured width, reduced to a CSV row.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use bvx_core::lens::RiskCheck;
use bvx_core::net::{tune_step_size, tune_step_size_on, TuneOptions};
use bvx_core::rng::derive_seed;
use bvx_core::{
    bias_variance, classification_risk_check, generate, run_ensemble, total_variance_split, BiasVarianceReport,
    Dataset, DecompositionReport, EnsembleSpec, Error, Head, MlpLearner, Mode, PredictionTensor, Provenance,
};
use nalgebra::DMatrix;

use crate::config::{ExperimentConfig, ModeConfig};
use crate::rows::{write_sweep, SweepRow};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSource {
    Override,
    Tuned,
    Base,
}

impl StepSource {
    fn as_str(self) -> &'static str {
        match self {
            StepSource::Override => "override",
            StepSource::Tuned => "tuned",
            StepSource::Base => "base",
        }
    }
}

/// Everything computed for one width.
#[derive(Debug, Clone)]
pub struct WidthResult {
    pub width: usize,
    pub step: f64,
    pub step_source: StepSource,
    pub tensor: PredictionTensor,
    pub report: BiasVarianceReport,
    pub split: DecompositionReport,
    pub risk: Option<RiskCheck>,
    /// Member predictions on the function grid, `(grid x, tensor)`.
    pub grid: Option<(Vec<f64>, PredictionTensor)>,
    pub row: SweepRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub width: usize,
    pub replicate: Option<usize>,
    pub seed_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub digest: String,
    pub test_set: Dataset,
    pub widths: Vec<WidthResult>,
    pub failures: Vec<FailureRecord>,
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.widths.iter().map(|w| w.row.clone()).collect()
    }
}

fn mode_name(m: ModeConfig) -> &'static str {
    match m {
        ModeConfig::LabelAsMean => "label-as-mean",
        ModeConfig::OracleMean => "oracle-mean",
    }
}

fn function_grid(cfg: &ExperimentConfig, train: &Dataset) -> Option<Vec<f64>> {
    let g = cfg.function_grid?;
    if !g.emit || train.input_dim() != 1 || train.output_dim() != 1 || cfg.head() != Head::Linear {
        return None;
    }
    let last = (g.resolution - 1) as f64;
    Some((0..g.resolution).map(|i| i as f64 / last).collect())
}

/// Runs every width of the sweep. Width-level failures are collected rather
/// than aborting, so the completed widths can still be written.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let master = e.master_seed;
    let digest = cfg.digest();
    let head = cfg.head();
    let mode: Mode = e.mode.into();

    let train = generate(&cfg.task.to_spec(), e.train_size, derive_seed(master, "train-set", &[]))?;
    let test = generate(&cfg.task.test_spec(), e.test_size, derive_seed(master, "test-set", &[]))?;
    if train.input_dim() != test.input_dim() || train.output_dim() != test.output_dim() {
        return Err(CliError::Config("train and test data have different shapes".into()));
    }
    let grid = function_grid(cfg, &train);
    let grid_inputs = grid
        .as_ref()
        .map(|xs| DMatrix::from_column_slice(xs.len(), 1, xs));

    let base = cfg.train.base_config();
    let spec = EnsembleSpec {
        n_s: e.n_s,
        n_o: e.n_o,
        master_seed: derive_seed(master, "ensemble", &[]),
    };

    let mut widths = Vec::new();
    let mut failures = Vec::new();
    for &width in &e.widths {
        let chosen = match choose_step(cfg, width, &train, head) {
            Ok(c) => c,
            Err(err) => {
                failures.push(FailureRecord {
                    width,
                    replicate: None,
                    seed_index: None,
                    message: err.to_string(),
                });
                continue;
            }
        };
        let (step, step_source) = chosen;
        let learner = MlpLearner {
            width,
            head,
            config: bvx_core::TrainConfig {
                step_size: step,
                ..base.clone()
            },
        };
        let provenance = Provenance {
            task: train.task.name().to_string(),
            width: Some(width),
            config_digest: digest.clone(),
        };
        let mut eval: Vec<&DMatrix<f64>> = vec![&test.inputs];
        if let Some(g) = &grid_inputs {
            eval.push(g);
        }
        let mut tensors = match run_ensemble(&learner, &train, &spec, &eval, &provenance) {
            Ok(t) => t,
            Err(Error::Ensemble(list)) => {
                failures.extend(list.into_iter().map(|f| FailureRecord {
                    width,
                    replicate: Some(f.replicate),
                    seed_index: Some(f.seed_index),
                    message: f.message,
                }));
                continue;
            }
            Err(err) => return Err(err.into()),
        };
        let grid_tensor = (tensors.len() > 1).then(|| tensors.pop().expect("grid tensor"));
        let tensor = tensors.pop().expect("test tensor");

        let report = bias_variance(&tensor, &test, mode)?.with_intervals(
            cfg.bootstrap.level,
            cfg.bootstrap.resamples,
            derive_seed(master, "bootstrap-ci", &[width as u64]),
        )?;
        let split = total_variance_split(&tensor)?;
        let risk = if head == Head::Softmax {
            Some(classification_risk_check(&tensor, &test)?)
        } else {
            None
        };
        let (bias_ci, var_ci) = (
            report.bias_ci.expect("intervals computed"),
            report.variance_ci.expect("intervals computed"),
        );
        let row = SweepRow {
            task: provenance.task.clone(),
            width,
            n_s: e.n_s,
            n_o: e.n_o,
            mode: mode_name(e.mode).to_string(),
            e_bias: report.e_bias,
            e_bias_lo: bias_ci.low,
            e_bias_hi: bias_ci.high,
            e_variance: report.e_variance,
            e_variance_lo: var_ci.low,
            e_variance_hi: var_ci.high,
            e_noise: report.e_noise,
            var_sampling: split.var_sampling,
            var_optimization: split.var_optimization,
            r_classif: risk.as_ref().map(|r| r.r_classif),
            r_reg: risk.as_ref().map(|r| r.r_reg),
            config_digest: digest.clone(),
        };
        widths.push(WidthResult {
            width,
            step,
            step_source,
            tensor,
            report,
            split,
            risk,
            grid: grid.clone().zip(grid_tensor),
            row,
        });
    }
    Ok(SweepOutcome {
        digest,
        test_set: test,
        widths,
        failures,
    })
}

fn choose_step(
    cfg: &ExperimentConfig,
    width: usize,
    train: &Dataset,
    head: Head,
) -> Result<(f64, StepSource), CliError> {
    if let Some(step) = cfg.train.override_for(width) {
        return Ok((step, StepSource::Override));
    }
    let Some(tune) = &cfg.tune else {
        return Ok((cfg.train.step_size, StepSource::Base));
    };
    let master = cfg.experiment.master_seed;
    let opts = TuneOptions {
        candidates: tune.candidates.clone(),
        repeats: tune.repeats,
        base: cfg.train.base_config(),
        head,
        seed: derive_seed(master, "tune", &[]),
    };
    let picked: BTreeMap<usize, f64> = match tune.validation_size {
        Some(n) => {
            let val = generate(&cfg.task.to_spec(), n, derive_seed(master, "validation-set", &[]))?;
            tune_step_size_on(&[width], train, &val, &opts)?
        }
        None => tune_step_size(&[width], train, tune.validation_fraction, &opts)?,
    };
    Ok((picked[&width], StepSource::Tuned))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        f(&mut w).expect("writing to memory");
        w.flush().expect("writing to memory");
    }
    buf
}

/// Writes `sweep.csv`, `steps.csv`, any function grids and, when something
/// failed, `failures.csv`.
pub fn write_outputs(outcome: &SweepOutcome, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let mut sweep = Vec::new();
    write_sweep(&mut sweep, &outcome.rows()).expect("writing to memory");
    write_file(&dir.join("sweep.csv"), &sweep)?;

    let steps = csv_bytes(|w| {
        w.write_record(["width", "step", "source"])?;
        for r in &outcome.widths {
            w.write_record([r.width.to_string(), bvx_core::fmt_f64(r.step), r.step_source.as_str().into()])?;
        }
        Ok(())
    });
    write_file(&dir.join("steps.csv"), &steps)?;

    for r in &outcome.widths {
        let Some((xs, t)) = &r.grid else { continue };
        let bytes = csv_bytes(|w| {
            w.write_record(["member_s", "member_o", "x", "prediction"])?;
            for s in 0..t.n_s() {
                for o in 0..t.n_o() {
                    for (i, x) in xs.iter().enumerate() {
                        w.write_record([
                            s.to_string(),
                            o.to_string(),
                            bvx_core::fmt_f64(*x),
                            bvx_core::fmt_f64(t.at(s, o, i)[0]),
                        ])?;
                    }
                }
            }
            Ok(())
        });
        write_file(&dir.join(format!("functions_w{}.csv", r.width)), &bytes)?;
    }

    let manifest = dir.join("failures.csv");
    if outcome.failures.is_empty() {
        if manifest.exists() {
            fs::remove_file(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        }
    } else {
        let bytes = csv_bytes(|w| {
            w.write_record(["width", "replicate", "seed_index", "message"])?;
            for f in &outcome.failures {
                let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([f.width.to_string(), opt(f.replicate), opt(f.seed_index), f.message.clone()])?;
            }
            Ok(())
        });
        write_file(&manifest, &bytes)?;
    }
    Ok(())
}

/// Mean over grid points of the population variance across all members.
pub fn function_spread(t: &PredictionTensor) -> f64 {
    let members = (t.n_s() * t.n_o()) as f64;
    let mut total = 0.0;
    for i in 0..t.points() {
        let vals: Vec<f64> = (0..t.n_s())
            .flat_map(|s| (0..t.n_o()).map(move |o| (s, o)))
            .map(|(s, o)| t.at(s, o, i)[0])
            .collect();
        let mean = vals.iter().sum::<f64>() / members;
        total += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / members;
    }
    total / t.points() as f64
}
