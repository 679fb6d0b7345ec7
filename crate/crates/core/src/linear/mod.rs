//! Fixed-design least squares with closed-form prediction-variance oracles.
//!
//! The design `X` (m × N) is held fixed; randomness enters through the label
//! noise ε and, for gradient descent, the initialization θ₀ ~ N(0, I/N).
//! All oracles are evaluated through a thin SVD `X = U S Vᵀ` truncated to the
//! numerical rank r, which gives `Σ⁺ = V S⁻² Vᵀ`, `Σ⁺Xᵀ = V S⁻¹ Uᵀ` and the
//! null-space projector `P⊥ = I − V Vᵀ`.

pub mod montecarlo;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{self, TaskSpec};
use crate::error::{Error, Result};

/// Relative cutoff for treating a singular value as zero, scaled by `max(m, N) σ_max`.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LinearFixedDesign {
    x: DMatrix<f64>,
    theta_star: DVector<f64>,
    sigma_eps: f64,
    rank: usize,
    /// N × r right singular vectors spanning the row space.
    v_r: DMatrix<f64>,
    /// m × r left singular vectors.
    u_r: DMatrix<f64>,
    s_r: DVector<f64>,
}

impl LinearFixedDesign {
    pub fn new(x: DMatrix<f64>, theta_star: DVector<f64>, sigma_eps: f64) -> Result<Self> {
        let (m, n) = x.shape();
        if m == 0 || n == 0 {
            return Err(Error::dim(format!("design must be non-empty, got {m}x{n}")));
        }
        if theta_star.len() != n {
            return Err(Error::dim(format!(
                "theta_star has {} entries for {n} columns",
                theta_star.len()
            )));
        }
        if !(sigma_eps.is_finite() && sigma_eps >= 0.0) {
            return Err(Error::config(format!("sigma_eps must be >= 0, got {sigma_eps}")));
        }
        let svd = x.clone().svd(true, true);
        let u = svd.u.expect("svd computed with u");
        let v_t = svd.v_t.expect("svd computed with v_t");
        let s = svd.singular_values;
        let s_max = s.iter().copied().fold(0.0, f64::max);
        let cutoff = RANK_RTOL * m.max(n) as f64 * s_max;
        let keep: Vec<usize> = (0..s.len()).filter(|&j| s[j] > cutoff && s[j] > 0.0).collect();
        let rank = keep.len();
        let mut v_r = DMatrix::zeros(n, rank);
        let mut u_r = DMatrix::zeros(m, rank);
        let mut s_r = DVector::zeros(rank);
        for (c, &j) in keep.iter().enumerate() {
            v_r.column_mut(c).copy_from(&v_t.row(j).transpose());
            u_r.column_mut(c).copy_from(&u.column(j));
            s_r[c] = s[j];
        }
        Ok(LinearFixedDesign {
            x,
            theta_star,
            sigma_eps,
            rank,
            v_r,
            u_r,
            s_r,
        })
    }

    /// Standard Gaussian design from a linear-teacher task.
    pub fn from_teacher(theta_star: &[f64], sigma_eps: f64, m: usize, seed: u64) -> Result<Self> {
        let task = TaskSpec::LinearTeacher {
            theta_star: theta_star.to_vec(),
            noise_sigma: sigma_eps,
        };
        let ds = data::generate(&task, m, seed)?;
        Self::new(ds.inputs, DVector::from_column_slice(theta_star), sigma_eps)
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.n()
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.s_r
    }

    /// Σ = XᵀX.
    pub fn sigma(&self) -> DMatrix<f64> {
        self.x.tr_mul(&self.x)
    }

    /// Σ⁺ (equal to Σ⁻¹ at full rank).
    pub fn sigma_pinv(&self) -> DMatrix<f64> {
        let inv_sq = self.s_r.map(|s| 1.0 / (s * s));
        let scaled = &self.v_r * DMatrix::from_diagonal(&inv_sq);
        scaled * self.v_r.transpose()
    }

    /// P⊥ = I − Σ⁺Σ.
    pub fn null_projector(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - &self.v_r * self.v_r.transpose()
    }

    pub fn project_null(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.v_r * self.v_r.tr_mul(v)
    }

    /// xᵀΣ⁺x.
    pub fn pinv_quadratic(&self, v: &DVector<f64>) -> f64 {
        let coords = self.v_r.tr_mul(v);
        coords
            .iter()
            .zip(self.s_r.iter())
            .map(|(c, s)| (c / s) * (c / s))
            .sum()
    }

    /// Σ⁺XᵀY, the minimum-norm least-squares solution.
    pub fn min_norm_solution(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut coords = self.u_r.tr_mul(y);
        coords.component_div_assign(&self.s_r);
        &self.v_r * coords
    }

    /// Largest eigenvalue of Σ by power iteration.
    pub fn lambda_max(&self) -> f64 {
        let n = self.n();
        let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
        v /= v.norm();
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let w = self.x.tr_mul(&(&self.x * &v));
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = v.dot(&w);
            v = w / norm;
            if (next - lambda).abs() <= 1e-12 * next.abs() {
                return next;
            }
            lambda = next;
        }
        lambda
    }

    /// Smallest nonzero eigenvalue of Σ.
    fn lambda_min_nonzero(&self) -> Option<f64> {
        self.s_r.iter().map(|s| s * s).reduce(f64::min)
    }

    /// Noisy labels `Y = Xθ* + σ_ε ε`.
    pub fn sample_labels<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let eps = DVector::from_fn(self.m(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.x * &self.theta_star + eps * self.sigma_eps
    }

    /// θ₀ ~ N(0, I/N).
    pub fn sample_init<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let scale = (1.0 / self.n() as f64).sqrt();
        DVector::from_fn(self.n(), |_, _| scale * rng.sample::<f64, _>(StandardNormal))
    }

    /// The same design with zero columns appended up to `n` parameters.
    pub fn padded(&self, n: usize) -> Result<Self> {
        if n < self.n() {
            return Err(Error::config(format!(
                "cannot pad {} columns down to {n}",
                self.n()
            )));
        }
        let x = self.x.clone().resize_horizontally(n, 0.0);
        let theta = self.theta_star.clone().resize_vertically(n, 0.0);
        Self::new(x, theta, self.sigma_eps)
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.n() {
            Ok(())
        } else {
            Err(Error::dim(format!("point has {} entries for N = {}", x.len(), self.n())))
        }
    }

    fn check_labels(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() == self.m() {
            Ok(())
        } else {
            Err(Error::dim(format!("{} labels for m = {}", y.len(), self.m())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    UnderParam,
    OverParamGD,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub theta_hat: DVector<f64>,
    pub regime: Regime,
    pub theta_0: Option<DVector<f64>>,
    pub iterations: usize,
}

impl LinearSolution {
    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.theta_hat.dot(x)
    }
}

/// θ̂ = Σ⁻¹XᵀY. Requires full column rank.
pub fn solve_closed_form(d: &LinearFixedDesign, y: &DVector<f64>) -> Result<LinearSolution> {
    d.check_labels(y)?;
    if !d.is_full_rank() {
        return Err(Error::Regime {
            rank: d.rank(),
            dim: d.n(),
        });
    }
    Ok(LinearSolution {
        theta_hat: d.min_norm_solution(y),
        regime: Regime::UnderParam,
        theta_0: None,
        iterations: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    pub step: f64,
    pub max_iters: usize,
    /// ℓ₂ distance to the limit at which iteration stops.
    pub tol: f64,
}

impl GdOptions {
    /// Step `1 / (2 λ_max(Σ))`, tolerance 1e-8.
    pub fn for_design(d: &LinearFixedDesign) -> Self {
        let lambda = d.lambda_max();
        GdOptions {
            step: if lambda > 0.0 { 0.5 / lambda } else { 1.0 },
            max_iters: 1_000_000,
            tol: 1e-8,
        }
    }
}

/// Full-batch gradient descent on `½‖Xθ − Y‖²` from `theta_0`.
///
/// Iterates stay in `θ₀ + rowspace(X)`, so the limit is
/// `P⊥θ₀ + Σ⁺XᵀY`. Because `θ − θ_lim` lies in the row space,
/// `‖θ − θ_lim‖ ≤ ‖∇‖ / λ_min⁺(Σ)`, which is the stopping rule.
pub fn solve_gd(
    d: &LinearFixedDesign,
    y: &DVector<f64>,
    theta_0: &DVector<f64>,
    opts: &GdOptions,
) -> Result<LinearSolution> {
    d.check_labels(y)?;
    d.check_point(theta_0)?;
    if !(opts.step.is_finite() && opts.step > 0.0) {
        return Err(Error::config(format!("step must be > 0, got {}", opts.step)));
    }
    let grad_tol = opts.tol * d.lambda_min_nonzero().unwrap_or(1.0);
    let mut theta = theta_0.clone();
    let mut resid = DVector::zeros(d.m());
    let mut grad = DVector::zeros(d.n());
    let mut iterations = 0;
    loop {
        resid.gemv(1.0, &d.x, &theta, 0.0);
        resid -= y;
        grad.gemv_tr(1.0, &d.x, &resid, 0.0);
        let grad_norm = grad.norm();
        if grad_norm <= grad_tol {
            break;
        }
        if iterations == opts.max_iters || !grad_norm.is_finite() {
            return Err(Error::Convergence {
                iterations,
                grad_norm,
            });
        }
        theta.axpy(-opts.step, &grad, 1.0);
        iterations += 1;
    }
    Ok(LinearSolution {
        theta_hat: theta,
        regime: Regime::OverParamGD,
        theta_0: Some(theta_0.clone()),
        iterations,
    })
}

/// σ_ε² xᵀΣ⁻¹x.
pub fn variance_under(d: &LinearFixedDesign, x: &DVector<f64>) -> Result<f64> {
    d.check_point(x)?;
    if !d.is_full_rank() {
        return Err(Error::Regime {
            rank: d.rank(),
            dim: d.n(),
        });
    }
    Ok(d.sigma_eps * d.sigma_eps * d.pinv_quadratic(x))
}

/// The two terms of the over-parameterized prediction variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverVariance {
    /// ‖P⊥x‖² / N, the variance over θ₀.
    pub init_term: f64,
    /// σ_ε² xᵀΣ⁺x, the variance over ε of the θ₀-averaged prediction.
    pub sampling_term: f64,
}

impl OverVariance {
    pub fn total(&self) -> f64 {
        self.init_term + self.sampling_term
    }
}

pub fn variance_over(d: &LinearFixedDesign, x: &DVector<f64>) -> Result<OverVariance> {
    d.check_point(x)?;
    let null = d.project_null(x);
    Ok(OverVariance {
        init_term: null.norm_squared() / d.n() as f64,
        sampling_term: d.sigma_eps * d.sigma_eps * d.pinv_quadratic(x),
    })
}

/// Pointwise variance averaged over the training rows: `Nσ²/m` at full rank,
/// `rσ²/m` otherwise. Training rows have no null-space component, so only
/// the sampling term contributes in the rank-deficient case.
pub fn expected_empirical_variance(d: &LinearFixedDesign) -> f64 {
    let rows = (0..d.m()).map(|i| d.x.row(i).transpose());
    let total: f64 = if d.is_full_rank() {
        rows.map(|r| variance_under(d, &r).expect("full rank")).sum()
    } else {
        rows.map(|r| variance_over(d, &r).expect("row dimension").sampling_term)
            .sum()
    };
    total / d.m() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub n: usize,
    pub init_term: f64,
}

/// Init-variance term at a fixed probe as the design is padded with zero
/// columns. Padding leaves the row space and ‖P⊥x‖ unchanged, so the term
/// decays exactly as 1/N.
pub fn init_variance_scaling_probe(
    base: &LinearFixedDesign,
    probe: &DVector<f64>,
    pad_dims: &[usize],
) -> Result<Vec<ProbeRow>> {
    base.check_point(probe)?;
    let null_sq = base.project_null(probe).norm_squared();
    if null_sq <= 1e-24 * probe.norm_squared().max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateProbe);
    }
    pad_dims
        .iter()
        .map(|&n| {
            let padded = base.padded(n)?;
            let x = probe.clone().resize_vertically(n, 0.0);
            Ok(ProbeRow {
                n,
                init_term: variance_over(&padded, &x)?.init_term,
            })
        })
        .collect()
}
