//! Single-hidden-layer networks with width-scaled uniform initialization.

mod train;

pub use train::{
    loss_and_gradient, mean_squared_error, train, tune_step_size, tune_step_size_on, EarlyStop, Optimizer,
    TrainConfig, TuneOptions, TrainOutcome, DEFAULT_MOMENTUM,
};

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::softmax;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Raw outputs, for regression.
    Linear,
    /// Probability vector over classes.
    Softmax,
}

impl Head {
    fn code(self) -> u32 {
        match self {
            Head::Linear => 0,
            Head::Softmax => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Head::Linear),
            1 => Some(Head::Softmax),
            _ => None,
        }
    }
}

/// Uniform(±1/√fan_in) for every weight and bias, so the weight variance of a
/// layer is `1 / (3 fan_in)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitSpec {
    pub seed: u64,
}

/// `h(x) = head(W2 · relu(W1 x + b1) + b2)`.
///
/// Parameters live in one flat vector in the order W1 (H × d, row-major),
/// b1 (H), W2 (K × H, row-major), b2 (K).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    width: usize,
    output_dim: usize,
    activation: Activation,
    head: Head,
    params: Vec<f64>,
}

pub(crate) fn param_count(d: usize, h: usize, k: usize) -> usize {
    h * d + h + k * h + k
}

impl MlpModel {
    pub fn from_params(
        input_dim: usize,
        width: usize,
        output_dim: usize,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || width == 0 || output_dim == 0 {
            return Err(Error::config("network dimensions must be >= 1"));
        }
        let want = param_count(input_dim, width, output_dim);
        if params.len() != want {
            return Err(Error::dim(format!("{} parameters, expected {want}", params.len())));
        }
        Ok(MlpModel {
            input_dim,
            width,
            output_dim,
            activation: Activation::Relu,
            head,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.width * self.input_dim]
    }

    pub fn b1(&self) -> &[f64] {
        let s = self.width * self.input_dim;
        &self.params[s..s + self.width]
    }

    pub fn w2(&self) -> &[f64] {
        let s = self.width * (self.input_dim + 1);
        &self.params[s..s + self.output_dim * self.width]
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.params.len() - self.output_dim..]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim, "input dimension");
        let mut hidden = vec![0.0; self.width];
        let mut out = vec![0.0; self.output_dim];
        self.forward_into(x, &mut hidden, &mut out);
        out
    }

    pub(crate) fn forward_into(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let d = self.input_dim;
        for ((z, b), w) in hidden.iter_mut().zip(self.b1()).zip(self.w1().chunks_exact(d)) {
            let pre = b + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *z = pre.max(0.0);
        }
        for ((o, b), w) in out
            .iter_mut()
            .zip(self.b2())
            .zip(self.w2().chunks_exact(self.width))
        {
            *o = b + w.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        if self.head == Head::Softmax {
            let p = softmax(out);
            out.copy_from_slice(&p);
        }
    }

    /// Predictions for every row of `inputs`, as a `T × K` matrix.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let t = inputs.nrows();
        let mut result = DMatrix::zeros(t, self.output_dim);
        let mut x = vec![0.0; self.input_dim];
        let mut hidden = vec![0.0; self.width];
        let mut out = vec![0.0; self.output_dim];
        for i in 0..t {
            for (c, v) in x.iter_mut().enumerate() {
                *v = inputs[(i, c)];
            }
            self.forward_into(&x, &mut hidden, &mut out);
            for (k, &o) in out.iter().enumerate() {
                result[(i, k)] = o;
            }
        }
        result
    }

    /// Flat checkpoint: five little-endian `u32`s (input dim, output dim,
    /// width, head, activation) followed by the parameters as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.params.len());
        for v in [
            self.input_dim as u32,
            self.output_dim as u32,
            self.width as u32,
            self.head.code(),
            self.activation.code(),
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: origin.to_path_buf(),
            message,
        };
        if bytes.len() < 20 {
            return Err(bad("checkpoint header truncated".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let (d, k, h) = (word(0) as usize, word(1) as usize, word(2) as usize);
        let head = Head::from_code(word(3)).ok_or_else(|| bad(format!("unknown head {}", word(3))))?;
        let activation = Activation::from_code(word(4))
            .ok_or_else(|| bad(format!("unknown activation {}", word(4))))?;
        let body = &bytes[20..];
        let want = param_count(d, h, k);
        if body.len() != 8 * want {
            return Err(bad(format!("{} parameter bytes, expected {}", body.len(), 8 * want)));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut model = MlpModel::from_params(d, h, k, head, params).map_err(|e| bad(e.to_string()))?;
        model.activation = activation;
        Ok(model)
    }
}

/// Draws a fresh network. Deterministic in `spec.seed`.
pub fn init(
    width: usize,
    input_dim: usize,
    output_dim: usize,
    head: Head,
    spec: &InitSpec,
) -> Result<MlpModel> {
    if width == 0 {
        return Err(Error::config("width must be >= 1"));
    }
    let mut rng = rng::stream(spec.seed, "mlp-init", &[]);
    let mut params = Vec::with_capacity(param_count(input_dim, width, output_dim));
    let mut layer = |rng: &mut rng::StreamRng, count: usize, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        params.extend((0..count).map(|_| rng.random_range(-bound..bound)));
    };
    layer(&mut rng, width * input_dim, input_dim);
    layer(&mut rng, width, input_dim);
    layer(&mut rng, output_dim * width, width);
    layer(&mut rng, output_dim, width);
    MlpModel::from_params(input_dim, width, output_dim, head, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_model(head: Head) -> MlpModel {
        MlpModel::from_params(1, 1, 1, head, vec![1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn relu_pass_through_and_cut() {
        let m = unit_model(Head::Linear);
        assert_eq!(m.forward(&[2.0]), vec![2.0]);
        assert_eq!(m.forward(&[-2.0]), vec![0.0]);
    }

    #[test]
    fn softmax_of_equal_logits() {
        let m = MlpModel::from_params(1, 1, 2, Head::Softmax, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(m.forward(&[3.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let m = init(37, 4, 3, Head::Linear, &InitSpec { seed: 1 }).unwrap();
        let b_in = 1.0 / 2.0;
        let b_hidden = 1.0 / 37f64.sqrt();
        assert!(m.w1().iter().chain(m.b1()).all(|w| w.abs() <= b_in));
        assert!(m.w2().iter().chain(m.b2()).all(|w| w.abs() <= b_hidden));
    }

    #[test]
    fn init_is_deterministic() {
        let spec = InitSpec { seed: 99 };
        let a = init(20, 3, 2, Head::Softmax, &spec).unwrap();
        let b = init(20, 3, 2, Head::Softmax, &spec).unwrap();
        assert_eq!(a.params(), b.params());
        let c = init(20, 3, 2, Head::Softmax, &InitSpec { seed: 100 }).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn init_variance_matches_uniform_moment() {
        let m = init(10_000, 1, 1, Head::Linear, &InitSpec { seed: 5 }).unwrap();
        let w = m.w1();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64
            - (w.iter().sum::<f64>() / w.len() as f64).powi(2);
        assert!((var - 1.0 / 3.0).abs() < 0.05 / 3.0, "var {var}");

        let m = init(100, 100, 100, Head::Linear, &InitSpec { seed: 6 }).unwrap();
        let w = m.w2();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 1.0 / 300.0).abs() < 0.05 / 300.0, "var {var}");
    }

    #[test]
    fn zero_width_rejected() {
        assert!(init(0, 1, 1, Head::Linear, &InitSpec { seed: 0 }).is_err());
    }

    #[test]
    fn checkpoint_layout() {
        let m = init(3, 2, 2, Head::Softmax, &InitSpec { seed: 4 }).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..20], &[2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes.len(), 20 + 8 * (6 + 3 + 6 + 2));
        assert_eq!(&bytes[20..28], &m.w1()[0].to_le_bytes());
        assert_eq!(MlpModel::from_bytes(&bytes, Path::new("m")).unwrap(), m);
        assert!(MlpModel::from_bytes(&bytes[..30], Path::new("m")).is_err());
    }
}
