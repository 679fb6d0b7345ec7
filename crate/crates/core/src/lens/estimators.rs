use rand::Rng;

use super::PredictionTensor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{mean, percentile_sorted};

/// What stands in for ȳ(x) when measuring bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Test labels are treated as noiseless, so `e_noise = 0`.
    #[default]
    LabelAsMean,
    /// The task's known conditional mean.
    OracleMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.low <= other.high && other.low <= self.high
    }
}

/// Per-test-point contributions; every report quantity is the mean of one of these.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise {
    pub bias: Vec<f64>,
    pub variance: Vec<f64>,
    pub noise: Vec<f64>,
    pub risk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasVarianceReport {
    pub mode: Mode,
    pub e_bias: f64,
    pub e_variance: f64,
    pub e_noise: f64,
    /// Mean over test points and members of ‖h(x) − y‖².
    pub risk: f64,
    /// `2 mean_i (h̄ − ȳ)·(ȳ − y)`: what separates `risk` from the three-term
    /// sum on a finite noisy test set. Zero in `LabelAsMean` mode.
    pub cross_term: f64,
    pub bias_ci: Option<Interval>,
    pub variance_ci: Option<Interval>,
    pub noise_ci: Option<Interval>,
    pub pointwise: Pointwise,
}

impl BiasVarianceReport {
    /// Percentile intervals from resampling test points.
    pub fn with_intervals(mut self, level: f64, resamples: usize, seed: u64) -> Result<Self> {
        self.bias_ci = Some(bootstrap_ci(&self.pointwise.bias, level, resamples, rng::derive_seed(seed, "ci-bias", &[]))?);
        self.variance_ci = Some(bootstrap_ci(
            &self.pointwise.variance,
            level,
            resamples,
            rng::derive_seed(seed, "ci-variance", &[]),
        )?);
        self.noise_ci = Some(bootstrap_ci(&self.pointwise.noise, level, resamples, rng::derive_seed(seed, "ci-noise", &[]))?);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    /// Variance over replicates of the seed-averaged prediction.
    pub var_sampling: f64,
    /// Mean over replicates of the variance over seeds.
    pub var_optimization: f64,
    /// Variance over the whole grid.
    pub total: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_test_axis(t: &PredictionTensor, test: &Dataset) -> Result<()> {
    if t.points() != test.len() || t.outputs() != test.output_dim() {
        return Err(Error::dim(format!(
            "tensor has {} points x {} outputs, test set {} x {}",
            t.points(),
            t.outputs(),
            test.len(),
            test.output_dim()
        )));
    }
    Ok(())
}

/// Mean prediction over all `(s, o)` cells at point `i`.
fn grid_mean(t: &PredictionTensor, i: usize) -> Vec<f64> {
    let mut acc = vec![0.0; t.outputs()];
    for s in 0..t.n_s() {
        for o in 0..t.n_o() {
            acc.iter_mut().zip(t.at(s, o, i)).for_each(|(a, v)| *a += v);
        }
    }
    let n = (t.n_s() * t.n_o()) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Squared bias, variance and noise averaged over the test points, with
/// population (divide-by-n) variances over the ensemble.
pub fn bias_variance(t: &PredictionTensor, test: &Dataset, mode: Mode) -> Result<BiasVarianceReport> {
    check_test_axis(t, test)?;
    let oracle = match mode {
        Mode::LabelAsMean => None,
        Mode::OracleMean => {
            if !test.true_mean_available {
                return Err(Error::Unsupported(
                    "oracle-mean mode needs a task with a known conditional mean".into(),
                ));
            }
            Some(test.true_means()?)
        }
    };
    let members = (t.n_s() * t.n_o()) as f64;
    let mut pw = Pointwise {
        bias: Vec::with_capacity(t.points()),
        variance: Vec::with_capacity(t.points()),
        noise: Vec::with_capacity(t.points()),
        risk: Vec::with_capacity(t.points()),
    };
    let mut cross = 0.0;
    for i in 0..t.points() {
        let label = test.target_row(i);
        let target = match &oracle {
            Some(m) => m.row(i).iter().copied().collect(),
            None => label.clone(),
        };
        let h_bar = grid_mean(t, i);
        let (mut var, mut risk) = (0.0, 0.0);
        for s in 0..t.n_s() {
            for o in 0..t.n_o() {
                let h = t.at(s, o, i);
                var += sq_dist(h, &h_bar);
                risk += sq_dist(h, &label);
            }
        }
        pw.bias.push(sq_dist(&h_bar, &target));
        pw.variance.push(var / members);
        pw.noise.push(sq_dist(&label, &target));
        pw.risk.push(risk / members);
        cross += 2.0
            * h_bar
                .iter()
                .zip(&target)
                .zip(&label)
                .map(|((h, m), y)| (h - m) * (m - y))
                .sum::<f64>();
    }
    Ok(BiasVarianceReport {
        mode,
        e_bias: mean(&pw.bias),
        e_variance: mean(&pw.variance),
        e_noise: mean(&pw.noise),
        risk: mean(&pw.risk),
        cross_term: cross / t.points() as f64,
        bias_ci: None,
        variance_ci: None,
        noise_ci: None,
        pointwise: pw,
    })
}

/// Law-of-total-variance split over the `(s, o)` grid, averaged over test points.
pub fn total_variance_split(t: &PredictionTensor) -> Result<DecompositionReport> {
    if t.n_s() < 2 || t.n_o() < 2 {
        return Err(Error::config("variance split needs n_S, n_O >= 2"));
    }
    let k = t.outputs();
    let (ns, no) = (t.n_s() as f64, t.n_o() as f64);
    let (mut v_samp, mut v_opt, mut v_tot) = (0.0, 0.0, 0.0);
    let mut seed_means = vec![vec![0.0; k]; t.n_s()];
    for i in 0..t.points() {
        let grand = grid_mean(t, i);
        for (s, sm) in seed_means.iter_mut().enumerate() {
            sm.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..t.n_o() {
                sm.iter_mut().zip(t.at(s, o, i)).for_each(|(a, v)| *a += v);
            }
            sm.iter_mut().for_each(|v| *v /= no);
            for o in 0..t.n_o() {
                let h = t.at(s, o, i);
                v_opt += sq_dist(h, sm);
                v_tot += sq_dist(h, &grand);
            }
            v_samp += sq_dist(sm, &grand);
        }
    }
    let points = t.points() as f64;
    Ok(DecompositionReport {
        var_sampling: v_samp / (ns * points),
        var_optimization: v_opt / (ns * no * points),
        total: v_tot / (ns * no * points),
    })
}

/// `resamples` index vectors of length `n`, drawn with replacement.
pub fn bootstrap_resamples(n: usize, resamples: usize, seed: u64) -> impl Iterator<Item = Vec<usize>> {
    let mut rng = rng::stream(seed, "bootstrap-ci", &[]);
    (0..resamples).map(move |_| (0..n).map(|_| rng.random_range(0..n)).collect())
}

/// Percentile interval of `statistic` recomputed over resampled indices of `0..n`.
pub fn bootstrap_ci_with<F>(n: usize, level: f64, resamples: usize, seed: u64, statistic: F) -> Result<Interval>
where
    F: Fn(&[usize]) -> f64,
{
    if n < 2 {
        return Err(Error::Degenerate(format!("bootstrap needs >= 2 points, got {n}")));
    }
    if resamples < 100 {
        return Err(Error::config(format!("bootstrap needs B >= 100, got {resamples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("confidence level must be in (0, 1), got {level}")));
    }
    let mut stats: Vec<f64> = bootstrap_resamples(n, resamples, seed)
        .map(|idx| statistic(&idx))
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        low: percentile_sorted(&stats, tail),
        high: percentile_sorted(&stats, 1.0 - tail),
    })
}

/// Percentile interval for the mean of `values`.
pub fn bootstrap_ci(values: &[f64], level: f64, resamples: usize, seed: u64) -> Result<Interval> {
    bootstrap_ci_with(values.len(), level, resamples, seed, |idx| {
        idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCheck {
    pub r_classif: f64,
    pub r_reg: f64,
    pub bound_ok: bool,
    /// Per-test-point 0-1 error averaged over members.
    pub classif_pointwise: Vec<f64>,
    /// Per-test-point ‖h − Y‖² averaged over members.
    pub reg_pointwise: Vec<f64>,
}

pub(crate) const BOUND_SLACK: f64 = 1e-12;

/// 0-1 risk against four times the squared-error risk for probability-vector
/// predictions. An argmax tie with the true class counts as an error.
pub fn classification_risk_check(t: &PredictionTensor, test: &Dataset) -> Result<RiskCheck> {
    check_test_axis(t, test)?;
    let labels = test.class_labels();
    let members = (t.n_s() * t.n_o()) as f64;
    let mut classif = Vec::with_capacity(t.points());
    let mut reg = Vec::with_capacity(t.points());
    for (i, &y) in labels.iter().enumerate() {
        let onehot = test.target_row(i);
        let (mut c, mut r) = (0.0, 0.0);
        for s in 0..t.n_s() {
            for o in 0..t.n_o() {
                let h = t.at(s, o, i);
                let total: f64 = h.iter().sum();
                if h.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Contract(format!(
                        "prediction at (s={s}, o={o}, i={i}) is not a probability vector"
                    )));
                }
                let wrong = h.iter().enumerate().any(|(k, &p)| k != y && p >= h[y]);
                if wrong {
                    c += 1.0;
                }
                r += sq_dist(h, &onehot);
            }
        }
        classif.push(c / members);
        reg.push(r / members);
    }
    let r_classif = mean(&classif);
    let r_reg = mean(&reg);
    Ok(RiskCheck {
        r_classif,
        r_reg,
        bound_ok: r_classif <= 4.0 * r_reg + BOUND_SLACK,
        classif_pointwise: classif,
        reg_pointwise: reg,
    })
}

#[cfg(test)]
mod tests {
    use super::super::Provenance;
    use super::*;
    use crate::data::TaskSpec;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn tensor(n_s: usize, n_o: usize, points: usize, k: usize, values: Vec<f64>) -> PredictionTensor {
        PredictionTensor::new(n_s, n_o, points, k, values, Provenance::default()).unwrap()
    }

    fn regression_set(ys: &[f64]) -> Dataset {
        Dataset::new(
            DMatrix::from_fn(ys.len(), 1, |i, _| i as f64 / ys.len() as f64),
            DMatrix::from_column_slice(ys.len(), 1, ys),
            Arc::new(TaskSpec::default()),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_ensemble() {
        let t = tensor(2, 2, 3, 1, vec![0.7; 12]);
        let r = bias_variance(&t, &regression_set(&[0.7, 0.7, 0.7]), Mode::LabelAsMean).unwrap();
        assert_eq!((r.e_bias, r.e_variance, r.e_noise), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_members_hand_computed() {
        let t = tensor(2, 1, 1, 1, vec![0.0, 2.0]);
        let r = bias_variance(&t, &regression_set(&[1.0]), Mode::LabelAsMean).unwrap();
        assert_eq!(r.e_bias, 0.0);
        assert_eq!(r.e_variance, 1.0);
    }

    #[test]
    fn split_hand_computed() {
        let t = tensor(2, 2, 1, 1, vec![0.0, 2.0, 4.0, 6.0]);
        let d = total_variance_split(&t).unwrap();
        assert_eq!(d.var_optimization, 1.0);
        assert_eq!(d.var_sampling, 4.0);
        assert_eq!(d.total, 5.0);
    }

    #[test]
    fn split_without_seed_spread() {
        let t = tensor(3, 2, 1, 1, vec![1.0, 1.0, 2.0, 2.0, 5.0, 5.0]);
        let d = total_variance_split(&t).unwrap();
        assert_eq!(d.var_optimization, 0.0);
        assert!((d.var_sampling - d.total).abs() < 1e-15);
        let flat = total_variance_split(&tensor(2, 2, 2, 1, vec![3.0; 8])).unwrap();
        assert_eq!((flat.var_sampling, flat.var_optimization, flat.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn oracle_mode_needs_true_mean() {
        let idx = Arc::new(TaskSpec::IdxClassification {
            images: "i".into(),
            labels: "l".into(),
        });
        let test = Dataset::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 2, 0.5), idx).unwrap();
        let t = tensor(2, 2, 1, 2, vec![0.5; 8]);
        assert!(matches!(bias_variance(&t, &test, Mode::OracleMean), Err(Error::Unsupported(_))));
    }

    #[test]
    fn constant_statistic_zero_width() {
        let ci = bootstrap_ci(&[2.5; 10], 0.99, 200, 1).unwrap();
        assert_eq!((ci.low, ci.high), (2.5, 2.5));
    }

    #[test]
    fn ci_uses_half_percent_tails() {
        // The resample index `idx[0]` is uniform on 0..200; statistic = that index.
        let n = 200;
        let b = 1001;
        let ci = bootstrap_ci_with(n, 0.99, b, 3, |idx| idx[0] as f64).unwrap();
        let mut stats: Vec<f64> = bootstrap_resamples(n, b, 3).map(|i| i[0] as f64).collect();
        stats.sort_by(f64::total_cmp);
        assert_eq!(ci.low, stats[5]);
        assert_eq!(ci.high, stats[995]);
    }

    #[test]
    fn bootstrap_errors() {
        assert!(matches!(bootstrap_ci(&[1.0], 0.99, 1000, 0), Err(Error::Degenerate(_))));
        assert!(matches!(bootstrap_ci(&[1.0, 2.0], 0.99, 99, 0), Err(Error::Config(_))));
    }

    fn class_set(labels: &[usize], k: usize) -> Dataset {
        let task = Arc::new(TaskSpec::GaussianClusters {
            means: (0..k).map(|c| vec![c as f64]).collect(),
            std: 1.0,
        });
        Dataset::new(
            DMatrix::zeros(labels.len(), 1),
            DMatrix::from_fn(labels.len(), k, |i, c| f64::from(u8::from(labels[i] == c))),
            task,
        )
        .unwrap()
    }

    #[test]
    fn risk_bound_hand_cases() {
        let right = tensor(2, 1, 1, 2, vec![0.6, 0.4, 0.6, 0.4]);
        let r = classification_risk_check(&right, &class_set(&[0], 2)).unwrap();
        assert_eq!(r.r_classif, 0.0);
        assert!((r.r_reg - 0.32).abs() < 1e-15);
        assert!(r.bound_ok);

        let wrong = tensor(2, 1, 1, 2, vec![0.4, 0.6, 0.4, 0.6]);
        let r = classification_risk_check(&wrong, &class_set(&[0], 2)).unwrap();
        assert_eq!(r.r_classif, 1.0);
        assert!((4.0 * r.r_reg - 2.88).abs() < 1e-12);
        assert!(r.bound_ok);

        let perfect = tensor(2, 1, 1, 2, vec![1.0, 0.0, 1.0, 0.0]);
        let r = classification_risk_check(&perfect, &class_set(&[0], 2)).unwrap();
        assert_eq!((r.r_classif, r.r_reg), (0.0, 0.0));
        assert!(r.bound_ok);
    }

    #[test]
    fn ties_count_as_errors() {
        let tie = tensor(2, 1, 1, 2, vec![0.5, 0.5, 0.5, 0.5]);
        let r = classification_risk_check(&tie, &class_set(&[1], 2)).unwrap();
        assert_eq!(r.r_classif, 1.0);
        assert!(r.bound_ok);
    }

    #[test]
    fn non_probability_predictions_rejected() {
        let bad = tensor(2, 1, 1, 2, vec![0.7, 0.7, 0.5, 0.5]);
        assert!(matches!(
            classification_risk_check(&bad, &class_set(&[0], 2)),
            Err(Error::Contract(_))
        ));
    }
}
