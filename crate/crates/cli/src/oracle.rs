//! `bvx linear-oracle`: Monte Carlo ensembles of linear least squares
//! checked against the closed-form variance terms.

use std::fs;
use std::path::Path;

use bvx_core::linear::montecarlo::{closed_form_variance, gradient_descent_variance};
use bvx_core::linear::{
    expected_empirical_variance, init_variance_scaling_probe, solve_gd, variance_over, variance_under, GdOptions,
};
use bvx_core::rng::{derive_seed, stream};
use bvx_core::stats::SampleMoments;
use bvx_core::LinearFixedDesign;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{LinearOracleConfig, LinearSection};
use crate::rows::{write_oracle, OracleRow};
use crate::CliError;

/// Tolerance for checks that should hold to rounding error.
pub const EXACT_TOL: f64 = 1e-8;
/// Tolerance for the padded-design scaling check.
pub const PAD_TOL: f64 = 1e-10;
/// Allowed distance between the gradient-descent limit and the closed form.
pub const GD_LIMIT_TOL: f64 = 1e-6;

fn gaussian(n: usize, seed: u64, tag: &str, idx: &[u64]) -> DVector<f64> {
    let mut rng = stream(seed, tag, idx);
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)))
}

fn rel(est: f64, oracle: f64) -> f64 {
    let diff = (est - oracle).abs();
    if oracle == 0.0 {
        diff
    } else {
        diff / oracle.abs()
    }
}

fn design(l: &LinearSection, n: usize, m: usize, tag: &str) -> Result<LinearFixedDesign, CliError> {
    let theta = gaussian(n, l.seed, tag, &[n as u64, m as u64]);
    let seed = derive_seed(l.seed, tag, &[n as u64, m as u64]);
    Ok(LinearFixedDesign::from_teacher(theta.as_slice(), l.sigma_eps, m, seed)?)
}

fn probes(l: &LinearSection, n: usize, tag: &str) -> Vec<DVector<f64>> {
    (0..l.probes)
        .map(|p| gaussian(n, l.seed, tag, &[n as u64, p as u64]))
        .collect()
}

struct Mc<'a> {
    l: &'a LinearSection,
    d: &'a LinearFixedDesign,
}

impl Mc<'_> {
    fn row(&self, point_id: String, check: &str, init: Option<f64>, sampling: f64, mc: &SampleMoments) -> OracleRow {
        let oracle = init.unwrap_or(0.0) + sampling;
        let diff = (mc.variance - oracle).abs();
        // The floor admits rounding noise when the true variance is zero.
        let pass = diff <= self.l.z_tolerance * mc.variance_stderr + 1e-12 * (1.0 + oracle);
        OracleRow {
            n: self.d.n(),
            m: self.d.m(),
            r: self.d.rank(),
            sigma_eps: self.l.sigma_eps,
            point_id,
            init_term: init,
            sampling_term: Some(sampling),
            mc_estimate: Some(mc.variance),
            mc_stderr: Some(mc.variance_stderr),
            check: check.into(),
            rel_err: rel(mc.variance, oracle),
            pass,
        }
    }

    fn exact(&self, point_id: &str, check: &str, est: f64, oracle: f64, tol: f64) -> OracleRow {
        let err = rel(est, oracle);
        OracleRow {
            n: self.d.n(),
            m: self.d.m(),
            r: self.d.rank(),
            sigma_eps: self.l.sigma_eps,
            point_id: point_id.into(),
            init_term: None,
            sampling_term: Some(oracle),
            mc_estimate: None,
            mc_stderr: None,
            check: check.into(),
            rel_err: err,
            pass: err <= tol,
        }
    }
}

/// Under-parameterized designs: Monte Carlo at random probes and the
/// training-row average `Nσ²/m`, plus the slope of that average in N.
pub fn under_checks(l: &LinearSection) -> Result<Vec<OracleRow>, CliError> {
    let mut rows = Vec::new();
    let mut averages = Vec::new();
    for &n in &l.under_dims {
        let d = design(l, n, l.under_m, "under-design")?;
        let mc = Mc { l, d: &d };
        let xs = probes(l, n, "under-probe");
        let moments = closed_form_variance(&d, &xs, l.mc_draws_under, derive_seed(l.seed, "under-mc", &[n as u64]))?;
        for (p, (x, m)) in xs.iter().zip(&moments).enumerate() {
            rows.push(mc.row(p.to_string(), "under-mc", None, variance_under(&d, x)?, m));
        }
        let avg = expected_empirical_variance(&d);
        let expected = n as f64 * l.sigma_eps * l.sigma_eps / l.under_m as f64;
        rows.push(mc.exact("rows", "under-row-average", avg, expected, EXACT_TOL));
        averages.push((n as f64, avg));
    }
    if averages.len() >= 2 {
        let k = averages.len() as f64;
        let mx = averages.iter().map(|a| a.0).sum::<f64>() / k;
        let my = averages.iter().map(|a| a.1).sum::<f64>() / k;
        let sxy: f64 = averages.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = averages.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let expected = l.sigma_eps * l.sigma_eps / l.under_m as f64;
        let err = rel(slope, expected);
        rows.push(OracleRow {
            n: 0,
            m: l.under_m,
            r: 0,
            sigma_eps: l.sigma_eps,
            point_id: "slope".into(),
            init_term: None,
            sampling_term: Some(expected),
            mc_estimate: Some(slope),
            mc_stderr: None,
            check: "under-slope".into(),
            rel_err: err,
            pass: err <= EXACT_TOL,
        });
    }
    Ok(rows)
}

/// Over-parameterized designs trained by gradient descent: the limit point,
/// Monte Carlo variance at random probes, and the training-row average.
pub fn over_checks(l: &LinearSection) -> Result<Vec<OracleRow>, CliError> {
    let mut rows = Vec::new();
    for &n in &l.over_dims {
        let d = design(l, n, l.over_m, "over-design")?;
        let mc = Mc { l, d: &d };
        let opts = GdOptions::for_design(&d);

        let mut rng = stream(l.seed, "over-limit", &[n as u64]);
        let theta_0 = d.sample_init(&mut rng);
        let y = d.sample_labels(&mut rng);
        let sol = solve_gd(&d, &y, &theta_0, &opts)?;
        let limit = d.project_null(&theta_0) + d.min_norm_solution(&y);
        let dist = (&sol.theta_hat - &limit).amax();
        rows.push(OracleRow {
            n,
            m: d.m(),
            r: d.rank(),
            sigma_eps: l.sigma_eps,
            point_id: "theta".into(),
            init_term: None,
            sampling_term: None,
            mc_estimate: None,
            mc_stderr: None,
            check: "over-gd-limit".into(),
            rel_err: dist,
            pass: dist <= GD_LIMIT_TOL,
        });

        let mut xs = probes(l, n, "over-probe");
        let n_random = xs.len();
        xs.extend((0..d.m()).map(|i| d.x().row(i).transpose()));
        let moments =
            gradient_descent_variance(&d, &xs, l.mc_draws_over, derive_seed(l.seed, "over-mc", &[n as u64]), &opts)?;
        for (p, (x, m)) in xs.iter().zip(&moments).take(n_random).enumerate() {
            let v = variance_over(&d, x)?;
            rows.push(mc.row(p.to_string(), "over-mc", Some(v.init_term), v.sampling_term, m));
        }
        // Averaging correlated estimates: the mean stderr bounds the stderr of the mean.
        let train_moments = &moments[n_random..];
        let k = train_moments.len() as f64;
        let avg = SampleMoments {
            n: l.mc_draws_over,
            mean: 0.0,
            variance: train_moments.iter().map(|m| m.variance).sum::<f64>() / k,
            variance_stderr: train_moments.iter().map(|m| m.variance_stderr).sum::<f64>() / k,
        };
        let expected = d.rank() as f64 * l.sigma_eps * l.sigma_eps / d.m() as f64;
        rows.push(mc.row("rows".into(), "over-row-average", Some(0.0), expected, &avg));
    }
    Ok(rows)
}

/// Zero-padded copies of one over-parameterized design: `N · init_term`
/// and the sampling term must both stay constant.
pub fn pad_checks(l: &LinearSection) -> Result<Vec<OracleRow>, CliError> {
    let base = design(l, l.pad_base_dim, l.over_m, "pad-design")?;
    let probe = gaussian(l.pad_base_dim, l.seed, "pad-probe", &[]);
    let base_terms = variance_over(&base, &probe)?;
    let reference = base_terms.init_term * l.pad_base_dim as f64;
    let scaling = init_variance_scaling_probe(&base, &probe, &l.pad_dims)?;
    let mut rows = Vec::new();
    for p in scaling {
        let padded = base.padded(p.n)?;
        let x = probe.clone().resize_vertically(p.n, 0.0);
        let sampling = variance_over(&padded, &x)?.sampling_term;
        let err = rel(p.init_term * p.n as f64, reference).max(rel(sampling, base_terms.sampling_term));
        rows.push(OracleRow {
            n: p.n,
            m: padded.m(),
            r: padded.rank(),
            sigma_eps: l.sigma_eps,
            point_id: "probe".into(),
            init_term: Some(p.init_term),
            sampling_term: Some(sampling),
            mc_estimate: None,
            mc_stderr: None,
            check: "pad-probe".into(),
            rel_err: err,
            pass: err <= PAD_TOL,
        });
    }
    Ok(rows)
}

pub fn run_linear_oracle(cfg: &LinearOracleConfig) -> Result<Vec<OracleRow>, CliError> {
    cfg.validate()?;
    let l = &cfg.linear;
    let mut rows = under_checks(l)?;
    rows.extend(over_checks(l)?);
    rows.extend(pad_checks(l)?);
    Ok(rows)
}

pub fn write_oracle_table(rows: &[OracleRow], dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("linear_oracle.csv");
    let mut buf = Vec::new();
    write_oracle(&mut buf, rows).expect("writing to memory");
    fs::write(&path, buf).map_err(|e| CliError::io(&path, e))
}
