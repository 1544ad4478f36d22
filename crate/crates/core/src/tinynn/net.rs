//! Fixed layer stacks with hand-wired backward passes.

use super::ops::{
    conv2d_backward, conv2d_forward, linear_backward, linear_forward, relu, relu_backward,
};
use super::{NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `w: [out, in]`, `b: [out]`.
    Linear { w: Tensor, b: Tensor },
    /// `kernels: [out_c, in_c, kh, kw]`, `bias: [out_c]`.
    Conv2d {
        kernels: Tensor,
        bias: Tensor,
        stride: usize,
    },
    Relu,
    /// `[B, ...] -> [B, prod]`.
    Flatten,
}

impl Layer {
    fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::Linear { w, b } => linear_forward(x, w, b),
            Layer::Conv2d {
                kernels,
                bias,
                stride,
            } => conv2d_forward(x, kernels, bias, *stride),
            Layer::Relu => Ok(relu(x)),
            Layer::Flatten => {
                let batch = *x.shape.first().ok_or_else(|| {
                    NnError::ShapeMismatch("flatten of a 0-d tensor".into())
                })?;
                let rest: usize = x.shape[1..].iter().product();
                x.reshaped(vec![batch, rest])
            }
        }
    }

    /// Gradients wrt the layer input and its parameters (in `params()` order).
    fn backward(&self, x: &Tensor, grad_y: &Tensor) -> Result<(Tensor, Vec<Tensor>), NnError> {
        match self {
            Layer::Linear { w, .. } => {
                let (gx, gw, gb) = linear_backward(x, w, grad_y)?;
                Ok((gx, vec![gw, gb]))
            }
            Layer::Conv2d {
                kernels, stride, ..
            } => {
                let (gx, gk, gb) = conv2d_backward(x, kernels, *stride, grad_y)?;
                Ok((gx, vec![gk, gb]))
            }
            Layer::Relu => Ok((relu_backward(x, grad_y), vec![])),
            Layer::Flatten => Ok((grad_y.reshaped(x.shape.clone())?, vec![])),
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Linear { w, b } => vec![w, b],
            Layer::Conv2d { kernels, bias, .. } => vec![kernels, bias],
            _ => vec![],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Linear { w, b } => vec![w, b],
            Layer::Conv2d { kernels, bias, .. } => vec![kernels, bias],
            _ => vec![],
        }
    }
}

/// A sequential stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Forward pass keeping the input of every layer plus the final output
    /// (`len = layers + 1`), for use by [`Network::backward`].
    pub fn forward_trace(&self, x: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(trace.last().unwrap())?;
            trace.push(next);
        }
        Ok(trace)
    }

    /// Reverse-mode sweep: parameter gradients in [`Network::params`] order.
    pub fn backward(&self, trace: &[Tensor], grad_out: Tensor) -> Result<Vec<Tensor>, NnError> {
        if trace.len() != self.layers.len() + 1 {
            return Err(NnError::ShapeMismatch(format!(
                "trace of {} entries for {} layers",
                trace.len(),
                self.layers.len()
            )));
        }
        let mut grad = grad_out;
        let mut param_grads_rev: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gx, gp) = layer.backward(&trace[i], &grad)?;
            param_grads_rev.push(gp);
            grad = gx;
        }
        Ok(param_grads_rev.into_iter().rev().flatten().collect())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}
