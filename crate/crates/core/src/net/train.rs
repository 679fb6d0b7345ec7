use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{init, Head, InitSpec, MlpModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    SgdMomentum,
    /// Full-batch steps; same momentum recurrence as SGD.
    BatchGd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub validation_fraction: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub step_size: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// `None` means the full training set.
    pub batch_size: Option<usize>,
    pub early_stop: Option<EarlyStop>,
}

impl TrainConfig {
    pub fn batch_gd(step_size: f64, epochs: usize) -> Self {
        TrainConfig {
            optimizer: Optimizer::BatchGd,
            step_size,
            momentum: DEFAULT_MOMENTUM,
            epochs,
            batch_size: None,
            early_stop: None,
        }
    }

    pub fn sgd(step_size: f64, epochs: usize, batch_size: usize) -> Self {
        TrainConfig {
            optimizer: Optimizer::SgdMomentum,
            step_size,
            momentum: DEFAULT_MOMENTUM,
            epochs,
            batch_size: Some(batch_size),
            early_stop: None,
        }
    }

    pub fn validate(&self, train_rows: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(Error::config(format!("step size must be finite and >= 0, got {}", self.step_size)));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        match (self.optimizer, self.batch_size) {
            (Optimizer::BatchGd, Some(b)) if b != train_rows => {
                return Err(Error::config(format!(
                    "batch GD uses the full set ({train_rows} rows), got batch size {b}"
                )))
            }
            (Optimizer::SgdMomentum, Some(b)) if b == 0 || b > train_rows => {
                return Err(Error::config(format!(
                    "batch size {b} must be in 1..={train_rows}"
                )))
            }
            _ => {}
        }
        if let Some(es) = self.early_stop {
            if !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) {
                return Err(Error::config("early-stop validation fraction must be in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean training loss seen during each epoch (for batch GD, the loss at
    /// the parameters the epoch started from).
    pub loss_trace: Vec<f64>,
    /// Validation loss per epoch, when early stopping is on.
    pub validation_trace: Vec<f64>,
}

/// Row-major copies of a dataset, for the training loop.
struct Rows {
    xs: Vec<f64>,
    ys: Vec<f64>,
    d: usize,
    k: usize,
}

impl Rows {
    fn new(data: &Dataset, rows: &[usize]) -> Self {
        let (d, k) = (data.input_dim(), data.output_dim());
        let mut xs = Vec::with_capacity(rows.len() * d);
        let mut ys = Vec::with_capacity(rows.len() * k);
        for &r in rows {
            xs.extend(data.inputs.row(r).iter());
            ys.extend(data.targets.row(r).iter());
        }
        Rows { xs, ys, d, k }
    }

    fn len(&self) -> usize {
        self.xs.len() / self.d
    }
}

struct Scratch {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
    g_out: Vec<f64>,
    g_hidden: Vec<f64>,
}

impl Scratch {
    fn new(model: &MlpModel) -> Self {
        Scratch {
            hidden_pre: vec![0.0; model.width],
            hidden: vec![0.0; model.width],
            out: vec![0.0; model.output_dim],
            g_out: vec![0.0; model.output_dim],
            g_hidden: vec![0.0; model.width],
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Mean squared error `1/(B K) Σ ‖h(x) − y‖²` over `batch`, with its
/// gradient written into `grad` (overwritten).
fn batch_loss_grad(
    model: &MlpModel,
    data: &Rows,
    batch: &[usize],
    grad: &mut [f64],
    s: &mut Scratch,
) -> f64 {
    let (d, h, k) = (model.input_dim, model.width, model.output_dim);
    let params = &model.params;
    let (w1, rest) = params.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(k * h);

    grad.iter_mut().for_each(|g| *g = 0.0);
    let (g_w1, g_rest) = grad.split_at_mut(h * d);
    let (g_b1, g_rest) = g_rest.split_at_mut(h);
    let (g_w2, g_b2) = g_rest.split_at_mut(k * h);

    let scale = 1.0 / (batch.len() * k) as f64;
    let mut loss = 0.0;
    for &r in batch {
        let x = &data.xs[r * d..(r + 1) * d];
        let y = &data.ys[r * k..(r + 1) * k];

        if d == 1 {
            let x0 = x[0];
            for (((z, a), &b), &w) in s.hidden_pre.iter_mut().zip(s.hidden.iter_mut()).zip(b1).zip(w1) {
                *z = b + w * x0;
                *a = z.max(0.0);
            }
        } else {
            for (((z, a), &b), w) in s
                .hidden_pre
                .iter_mut()
                .zip(s.hidden.iter_mut())
                .zip(b1)
                .zip(w1.chunks_exact(d))
            {
                *z = b + dot(w, x);
                *a = z.max(0.0);
            }
        }
        for ((o, &b), w) in s.out.iter_mut().zip(b2).zip(w2.chunks_exact(h)) {
            *o = b + dot(w, &s.hidden);
        }

        match model.head {
            Head::Linear => {
                for ((g, &o), &t) in s.g_out.iter_mut().zip(&s.out).zip(y) {
                    let e = o - t;
                    loss += e * e;
                    *g = 2.0 * scale * e;
                }
            }
            Head::Softmax => {
                let max = s.out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for o in s.out.iter_mut() {
                    *o = (*o - max).exp();
                    total += *o;
                }
                s.out.iter_mut().for_each(|o| *o /= total);
                let mut pg = 0.0;
                for ((g, &p), &t) in s.g_out.iter_mut().zip(&s.out).zip(y) {
                    let e = p - t;
                    loss += e * e;
                    *g = 2.0 * scale * e;
                    pg += p * *g;
                }
                // Softmax Jacobian: diag(p) − ppᵀ.
                for (g, &p) in s.g_out.iter_mut().zip(&s.out) {
                    *g = p * (*g - pg);
                }
            }
        }

        s.g_hidden.iter_mut().for_each(|g| *g = 0.0);
        for (((&go, gw), gb), w) in s
            .g_out
            .iter()
            .zip(g_w2.chunks_exact_mut(h))
            .zip(g_b2.iter_mut())
            .zip(w2.chunks_exact(h))
        {
            axpy(go, &s.hidden, gw);
            *gb += go;
            axpy(go, w, &mut s.g_hidden);
        }
        for (g, &z) in s.g_hidden.iter_mut().zip(&s.hidden_pre) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        if d == 1 {
            let x0 = x[0];
            for ((gw, gb), &g) in g_w1.iter_mut().zip(g_b1.iter_mut()).zip(&s.g_hidden) {
                *gw += g * x0;
                *gb += g;
            }
        } else {
            for ((gw, gb), &g) in g_w1.chunks_exact_mut(d).zip(g_b1.iter_mut()).zip(&s.g_hidden) {
                axpy(g, x, gw);
                *gb += g;
            }
        }
    }
    loss * scale
}

fn rows_loss(model: &MlpModel, data: &Rows) -> f64 {
    let mut hidden = vec![0.0; model.width];
    let mut out = vec![0.0; model.output_dim];
    let mut total = 0.0;
    for r in 0..data.len() {
        model.forward_into(&data.xs[r * data.d..(r + 1) * data.d], &mut hidden, &mut out);
        total += out
            .iter()
            .zip(&data.ys[r * data.k..(r + 1) * data.k])
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
    }
    total / (data.len() * data.k) as f64
}

/// Training loss and its analytic gradient over the whole dataset.
pub fn loss_and_gradient(model: &MlpModel, data: &Dataset) -> (f64, Vec<f64>) {
    let all: Vec<usize> = (0..data.len()).collect();
    let rows = Rows::new(data, &all);
    let mut grad = vec![0.0; model.params.len()];
    let mut s = Scratch::new(model);
    let loss = batch_loss_grad(model, &rows, &all, &mut grad, &mut s);
    (loss, grad)
}

/// `1/(m K) Σ ‖h(x) − y‖²` over a dataset.
pub fn mean_squared_error(model: &MlpModel, data: &Dataset) -> f64 {
    let all: Vec<usize> = (0..data.len()).collect();
    rows_loss(model, &Rows::new(data, &all))
}

/// `v ← μv + g; θ ← θ − ηv`.
pub(crate) fn momentum_step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], step: f64, momentum: f64) {
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p -= step * *v;
    }
}

/// Trains with momentum `v ← μv + g; θ ← θ − ηv` on squared error.
pub fn train(model: MlpModel, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    if data.input_dim() != model.input_dim || data.output_dim() != model.output_dim {
        return Err(Error::dim(format!(
            "model is {}→{}, data is {}→{}",
            model.input_dim,
            model.output_dim,
            data.input_dim(),
            data.output_dim()
        )));
    }
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut validation = None;
    if let Some(es) = cfg.early_stop {
        let mut split_rng = rng::stream(seed, "early-stop-split", &[]);
        order.shuffle(&mut split_rng);
        let n_val = ((es.validation_fraction * data.len() as f64).round() as usize)
            .clamp(1, data.len().saturating_sub(1).max(1));
        if n_val >= data.len() {
            return Err(Error::config("early stopping needs at least two rows"));
        }
        let val_rows = order.split_off(data.len() - n_val);
        validation = Some(Rows::new(data, &val_rows));
    }
    let train_rows = Rows::new(data, &order);
    let m = train_rows.len();
    cfg.validate(m)?;
    let batch_size = match cfg.optimizer {
        Optimizer::BatchGd => m,
        Optimizer::SgdMomentum => cfg.batch_size.unwrap_or(m),
    };

    let mut model = model;
    let mut velocity = vec![0.0; model.params.len()];
    let mut grad = vec![0.0; model.params.len()];
    let mut scratch = Scratch::new(&model);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut shuffle_rng = rng::stream(seed, "sgd-shuffle", &[]);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut validation_trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        if cfg.optimizer == Optimizer::SgdMomentum && batch_size < m {
            perm.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for batch in perm.chunks(batch_size) {
            let loss = batch_loss_grad(&model, &train_rows, batch, &mut grad, &mut scratch);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            momentum_step(&mut model.params, &mut velocity, &grad, cfg.step_size, cfg.momentum);
        }
        loss_trace.push(epoch_loss / m as f64);

        if let (Some(es), Some(val)) = (cfg.early_stop, validation.as_ref()) {
            let v = rows_loss(&model, val);
            if !v.is_finite() {
                return Err(Error::Divergence { epoch, loss: v });
            }
            validation_trace.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > es.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    if !model.is_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs.saturating_sub(1),
            loss: f64::INFINITY,
        });
    }
    Ok(TrainOutcome {
        model,
        loss_trace,
        validation_trace,
    })
}

/// Step-size search settings.
#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub candidates: Vec<f64>,
    /// Networks trained per candidate, each from its own initialization.
    pub repeats: usize,
    pub base: TrainConfig,
    pub head: Head,
    pub seed: u64,
}

/// Picks, per width, the candidate step with the lowest mean validation
/// squared loss over `repeats` initializations. Ties go to the smaller step,
/// then to the earlier candidate. A candidate that diverges from any
/// initialization is skipped. The validation rows are split off `data`.
pub fn tune_step_size(
    widths: &[usize],
    data: &Dataset,
    validation_fraction: f64,
    opts: &TuneOptions,
) -> Result<BTreeMap<usize, f64>> {
    if let Some(picked) = trivial_choice(widths, opts)? {
        return Ok(picked);
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::config("validation fraction must be in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::stream(opts.seed, "tune-split", &[]));
    let n_val = ((validation_fraction * data.len() as f64).round() as usize).max(1);
    if n_val >= data.len() {
        return Err(Error::config("validation split leaves no training rows"));
    }
    let val_rows = order.split_off(data.len() - n_val);
    tune_step_size_on(widths, &data.select(&order), &data.select(&val_rows), opts)
}

fn trivial_choice(widths: &[usize], opts: &TuneOptions) -> Result<Option<BTreeMap<usize, f64>>> {
    match opts.candidates.as_slice() {
        [] => Err(Error::config("no candidate step sizes")),
        [only] => Ok(Some(widths.iter().map(|&w| (w, *only)).collect())),
        _ if opts.repeats == 0 => Err(Error::config("tuning needs at least one repeat")),
        _ => Ok(None),
    }
}

/// Like [`tune_step_size`], scoring each candidate on a separate validation set.
pub fn tune_step_size_on(
    widths: &[usize],
    train_set: &Dataset,
    val_set: &Dataset,
    opts: &TuneOptions,
) -> Result<BTreeMap<usize, f64>> {
    if let Some(picked) = trivial_choice(widths, opts)? {
        return Ok(picked);
    }
    if val_set.is_empty() || val_set.output_dim() != train_set.output_dim() || val_set.input_dim() != train_set.input_dim() {
        return Err(Error::dim("validation set must be non-empty and shaped like the training set"));
    }
    let mut cfg = opts.base.clone();
    if cfg.optimizer == Optimizer::BatchGd {
        cfg.batch_size = None;
    }

    let mut chosen = BTreeMap::new();
    for &width in widths {
        let starts: Vec<(u64, MlpModel)> = (0..opts.repeats)
            .map(|r| {
                let seed = rng::derive_seed(opts.seed, "tune-init", &[width as u64, r as u64]);
                let m = init(width, train_set.input_dim(), train_set.output_dim(), opts.head, &InitSpec { seed })?;
                Ok((seed, m))
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> = (0..opts.candidates.len())
            .flat_map(|c| (0..opts.repeats).map(move |r| (c, r)))
            .collect();
        let losses: Vec<Option<f64>> = jobs
            .par_iter()
            .map(|&(c, r)| {
                let cfg = TrainConfig {
                    step_size: opts.candidates[c],
                    ..cfg.clone()
                };
                let (seed, start) = &starts[r];
                train(start.clone(), train_set, &cfg, *seed)
                    .ok()
                    .map(|out| mean_squared_error(&out.model, val_set))
                    .filter(|v| v.is_finite())
            })
            .collect();
        let mut best: Option<(f64, f64)> = None;
        for (&step, runs) in opts.candidates.iter().zip(losses.chunks(opts.repeats)) {
            let Some(total) = runs.iter().copied().sum::<Option<f64>>() else { continue };
            let loss = total / opts.repeats as f64;
            let better = match best {
                None => true,
                Some((bl, bs)) => loss < bl || (loss == bl && step < bs),
            };
            if better {
                best = Some((loss, step));
            }
        }
        let (_, step) = best.ok_or(Error::Tuning { width })?;
        chosen.insert(width, step);
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, TaskSpec};

    fn sinusoid(m: usize, seed: u64) -> Dataset {
        generate(&TaskSpec::default(), m, seed).unwrap()
    }

    #[test]
    fn momentum_recurrence_by_hand() {
        let (mut theta, mut v) = ([0.0], [0.0]);
        momentum_step(&mut theta, &mut v, &[1.0], 0.1, 0.9);
        assert!((theta[0] + 0.1).abs() < 1e-15);
        momentum_step(&mut theta, &mut v, &[1.0], 0.1, 0.9);
        assert!((v[0] - 1.9).abs() < 1e-15);
        assert!((theta[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn training_uses_the_stated_recurrence() {
        // One input, one hidden unit that is always off (b1 = -10, W1 = 0):
        // the only live parameter is b2 and ∂L/∂b2 = 2(b2 − y).
        let model = MlpModel::from_params(1, 1, 1, Head::Linear, vec![0.0, -10.0, 0.0, 0.0]).unwrap();
        let task = std::sync::Arc::new(TaskSpec::default());
        let data = Dataset::new(
            nalgebra::DMatrix::from_element(1, 1, 0.3),
            nalgebra::DMatrix::from_element(1, 1, 1.0),
            task,
        )
        .unwrap();
        let cfg = TrainConfig::batch_gd(0.1, 2);
        let out = train(model, &data, &cfg, 0).unwrap();
        // g1 = 2(0 − 1) = −2, v1 = −2, b2 = 0.2
        // g2 = 2(0.2 − 1) = −1.6, v2 = 0.9·(−2) − 1.6 = −3.4, b2 = 0.2 + 0.34 = 0.54
        assert!((out.model.b2()[0] - 0.54).abs() < 1e-15);
        assert_eq!(out.loss_trace, vec![1.0, (0.8f64).powi(2)]);
    }

    #[test]
    fn zero_step_leaves_parameters() {
        let data = sinusoid(10, 1);
        let m = init(8, 1, 1, Head::Linear, &InitSpec { seed: 2 }).unwrap();
        let out = train(m.clone(), &data, &TrainConfig::sgd(0.0, 3, 4), 3).unwrap();
        assert_eq!(out.model.params(), m.params());
    }

    #[test]
    fn training_is_deterministic() {
        let data = sinusoid(20, 1);
        let m = init(16, 1, 1, Head::Linear, &InitSpec { seed: 2 }).unwrap();
        let cfg = TrainConfig::sgd(0.01, 20, 5);
        let a = train(m.clone(), &data, &cfg, 7).unwrap();
        let b = train(m, &data, &cfg, 7).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn divergence_names_the_epoch() {
        let data = sinusoid(20, 1);
        let m = init(16, 1, 1, Head::Linear, &InitSpec { seed: 2 }).unwrap();
        let err = train(m, &data, &TrainConfig::batch_gd(50.0, 2000), 0).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch, .. } if epoch > 0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::sgd(0.1, 1, 0).validate(10).is_err());
        assert!(TrainConfig::sgd(0.1, 1, 11).validate(10).is_err());
        let mut full = TrainConfig::batch_gd(0.1, 1);
        assert!(full.validate(10).is_ok());
        full.batch_size = Some(5);
        assert!(full.validate(10).is_err());
        assert!(TrainConfig::batch_gd(f64::NAN, 1).validate(10).is_err());
    }

    #[test]
    fn early_stopping_keeps_best_validation_params() {
        let data = sinusoid(40, 3);
        let m = init(32, 1, 1, Head::Linear, &InitSpec { seed: 4 }).unwrap();
        let mut cfg = TrainConfig::batch_gd(0.05, 300);
        cfg.early_stop = Some(EarlyStop {
            validation_fraction: 0.25,
            patience: 5,
        });
        let out = train(m, &data, &cfg, 1).unwrap();
        let best = out.validation_trace.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(out.validation_trace.len() <= 300);
        assert!(best.is_finite());
    }

    fn opts(candidates: &[f64], base: TrainConfig) -> TuneOptions {
        TuneOptions {
            candidates: candidates.to_vec(),
            repeats: 2,
            base,
            head: Head::Linear,
            seed: 0,
        }
    }

    #[test]
    fn single_candidate_returned_unconditionally() {
        let data = sinusoid(10, 1);
        let cfg = TrainConfig::batch_gd(1.0, 10);
        let got = tune_step_size(&[3, 7], &data, 0.2, &opts(&[1e9], cfg)).unwrap();
        assert_eq!(got.get(&3), Some(&1e9));
        assert_eq!(got.get(&7), Some(&1e9));
    }

    #[test]
    fn duplicate_candidates_pick_that_step() {
        let data = sinusoid(20, 1);
        let cfg = TrainConfig::batch_gd(0.0, 50);
        let got = tune_step_size(&[4], &data, 0.25, &opts(&[0.01, 0.01], cfg)).unwrap();
        assert_eq!(got[&4], 0.01);
    }

    #[test]
    fn all_diverging_is_a_tuning_error() {
        let data = sinusoid(20, 1);
        let cfg = TrainConfig::batch_gd(0.0, 2000);
        let err = tune_step_size(&[16], &data, 0.25, &opts(&[50.0, 80.0], cfg)).unwrap_err();
        assert!(matches!(err, Error::Tuning { width: 16 }));
    }
}
