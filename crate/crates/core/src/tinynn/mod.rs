//! Minimal dense neural-network kernels: linear layers, valid 2D
//! convolution, ReLU, softmax cross-entropy and Adam, all in f64 with
//! hand-wired backward passes. There is no autograd graph; the architecture
//! zoo is small enough that every network is a fixed layer stack.
//!
//! Training is single-threaded and a pure function of (data, seed,
//! hyperparameters): repeated runs produce identical weights.

mod adam;
mod net;
mod ops;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use net::{Layer, Network};
pub use ops::{
    conv2d_backward, conv2d_forward, cross_entropy, linear_backward, linear_forward, relu,
    relu_backward, softmax,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("convolution window {kh}x{kw} larger than input {h}x{w}")]
    WindowTooLarge {
        kh: usize,
        kw: usize,
        h: usize,
        w: usize,
    },
    #[error("empty input: {0}")]
    Empty(String),
}

/// Dense row-major tensor of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data reinterpreted under a new shape of equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self, NnError> {
        Tensor::new(shape, self.data.clone())
    }
}

/// Uniform values in `[-bound, bound]`, drawn in row-major order from the
/// given stream.
pub fn uniform_init(
    shape: Vec<usize>,
    bound: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Tensor {
    use rand::Rng;
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor { shape, data }
}
