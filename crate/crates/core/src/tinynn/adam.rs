//! Adam with standard bias correction.

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: step count plus first/second moments shaped like the
/// parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub hyper: AdamHyper,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[&Tensor], hyper: AdamHyper) -> Self {
        Self {
            step: 0,
            hyper,
            m: params.iter().map(|p| Tensor::zeros(p.shape.clone())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape.clone())).collect(),
        }
    }
}

/// One Adam update over all parameter tensors. Deterministic; shapes of
/// `params`, `grads` and the state must agree.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let AdamHyper {
        lr,
        beta1,
        beta2,
        eps,
    } = state.hyper;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if p.shape != g.shape {
            return Err(NnError::ShapeMismatch(format!(
                "param {:?} vs grad {:?}",
                p.shape, g.shape
            )));
        }
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
