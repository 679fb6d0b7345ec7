//! Monte Carlo estimates of prediction variance, drawn through the solvers.

use nalgebra::DVector;
use rayon::prelude::*;

use super::{solve_closed_form, solve_gd, GdOptions, LinearFixedDesign};
use crate::error::Result;
use crate::rng;
use crate::stats::SampleMoments;

/// Draws per random stream; chunks are the unit of parallel work.
const CHUNK: usize = 512;

fn run_chunks<F>(draws: usize, n_probes: usize, one_chunk: F) -> Result<Vec<SampleMoments>>
where
    F: Fn(usize, std::ops::Range<usize>) -> Result<Vec<f64>> + Sync,
{
    let n_chunks = draws.div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| one_chunk(c, c * CHUNK..((c + 1) * CHUNK).min(draws)))
        .collect::<Result<_>>()?;
    // Chunk rows are draw-major: [draw][probe].
    let mut per_probe = vec![Vec::with_capacity(draws); n_probes];
    for chunk in &chunks {
        for row in chunk.chunks_exact(n_probes) {
            for (p, &v) in row.iter().enumerate() {
                per_probe[p].push(v);
            }
        }
    }
    Ok(per_probe.iter().map(|s| SampleMoments::from_samples(s)).collect())
}

/// Variance over ε of closed-form predictions at each probe.
pub fn closed_form_variance(
    d: &LinearFixedDesign,
    probes: &[DVector<f64>],
    draws: usize,
    seed: u64,
) -> Result<Vec<SampleMoments>> {
    run_chunks(draws, probes.len(), |c, range| {
        let mut rng = rng::stream(seed, "mc-closed-form", &[c as u64]);
        let mut out = Vec::with_capacity(range.len() * probes.len());
        for _ in range {
            let y = d.sample_labels(&mut rng);
            let sol = solve_closed_form(d, &y)?;
            out.extend(probes.iter().map(|x| sol.predict(x)));
        }
        Ok(out)
    })
}

/// Joint variance over (θ₀, ε) of gradient-descent predictions at each probe.
pub fn gradient_descent_variance(
    d: &LinearFixedDesign,
    probes: &[DVector<f64>],
    draws: usize,
    seed: u64,
    opts: &GdOptions,
) -> Result<Vec<SampleMoments>> {
    run_chunks(draws, probes.len(), |c, range| {
        let mut rng = rng::stream(seed, "mc-gradient-descent", &[c as u64]);
        let mut out = Vec::with_capacity(range.len() * probes.len());
        for _ in range {
            let theta_0 = d.sample_init(&mut rng);
            let y = d.sample_labels(&mut rng);
            let sol = solve_gd(d, &y, &theta_0, opts)?;
            out.extend(probes.iter().map(|x| sol.predict(x)));
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_gives_zero_variance() {
        let d = LinearFixedDesign::from_teacher(&[1.0, -2.0, 0.5], 0.0, 20, 4).unwrap();
        let probes = vec![DVector::from_vec(vec![1.0, 1.0, 1.0])];
        let m = closed_form_variance(&d, &probes, 1000, 1).unwrap();
        assert!(m[0].variance < 1e-24);
        assert!((m[0].mean - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn chunking_is_deterministic() {
        let d = LinearFixedDesign::from_teacher(&[0.0; 3], 0.5, 10, 4).unwrap();
        let probes = vec![DVector::from_vec(vec![1.0, 0.0, 2.0])];
        let a = closed_form_variance(&d, &probes, 1500, 9).unwrap();
        let b = closed_form_variance(&d, &probes, 1500, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].n, 1500);
    }
}
