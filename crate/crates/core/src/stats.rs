//! Small descriptive statistics shared by the estimators.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Divide-by-n variance.
pub fn pop_variance(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64
}

/// Moments of a Monte Carlo sample, with the standard error of the
/// variance estimate from the fourth central moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased (n - 1) variance.
    pub variance: f64,
    pub variance_stderr: f64,
}

impl SampleMoments {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let nf = n as f64;
        let mu = mean(xs);
        let (m2, m4) = xs.iter().fold((0.0, 0.0), |(a, b), x| {
            let d2 = (x - mu) * (x - mu);
            (a + d2, b + d2 * d2)
        });
        let m2 = m2 / nf;
        let m4 = m4 / nf;
        SampleMoments {
            n,
            mean: mu,
            variance: m2 * nf / (nf - 1.0),
            variance_stderr: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        }
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
