//! Forward and backward kernels. Convolutions use the cross-correlation
//! convention with no padding (valid windows only).

use super::{NnError, Tensor};

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize), NnError> {
    match t.shape[..] {
        [a, b] => Ok((a, b)),
        _ => Err(NnError::ShapeMismatch(format!(
            "{what} must be 2-d, got {:?}",
            t.shape
        ))),
    }
}

/// `y = x W^T + b` with `x: [batch, in]`, `w: [out, in]`, `b: [out]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (batch, in_dim) = dims2(x, "input")?;
    let (out_dim, w_in) = dims2(w, "weight")?;
    if w_in != in_dim || b.shape != [out_dim] {
        return Err(NnError::ShapeMismatch(format!(
            "linear: x {:?}, w {:?}, b {:?}",
            x.shape, w.shape, b.shape
        )));
    }
    let mut y = vec![0.0; batch * out_dim];
    for i in 0..batch {
        let xrow = &x.data[i * in_dim..(i + 1) * in_dim];
        for o in 0..out_dim {
            let wrow = &w.data[o * in_dim..(o + 1) * in_dim];
            let mut acc = b.data[o];
            for k in 0..in_dim {
                acc += xrow[k] * wrow[k];
            }
            y[i * out_dim + o] = acc;
        }
    }
    Tensor::new(vec![batch, out_dim], y)
}

/// Gradients of the linear layer: `(grad_x, grad_w, grad_b)`.
pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    grad_y: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (batch, in_dim) = dims2(x, "input")?;
    let (out_dim, _) = dims2(w, "weight")?;
    if grad_y.shape != [batch, out_dim] {
        return Err(NnError::ShapeMismatch(format!(
            "linear backward: grad {:?} for x {:?}, w {:?}",
            grad_y.shape, x.shape, w.shape
        )));
    }
    let mut gx = vec![0.0; batch * in_dim];
    let mut gw = vec![0.0; out_dim * in_dim];
    let mut gb = vec![0.0; out_dim];
    for i in 0..batch {
        for o in 0..out_dim {
            let g = grad_y.data[i * out_dim + o];
            gb[o] += g;
            for k in 0..in_dim {
                gx[i * in_dim + k] += g * w.data[o * in_dim + k];
                gw[o * in_dim + k] += g * x.data[i * in_dim + k];
            }
        }
    }
    Ok((
        Tensor::new(vec![batch, in_dim], gx)?,
        Tensor::new(vec![out_dim, in_dim], gw)?,
        Tensor::new(vec![out_dim], gb)?,
    ))
}

/// (batch, c_in, h, w, c_out, kh, kw, stride) of a validated convolution.
type ConvDims = (usize, usize, usize, usize, usize, usize, usize, usize);

fn conv_dims(x: &Tensor, kernels: &Tensor, stride: usize) -> Result<ConvDims, NnError> {
    let (batch, c_in, h, w) = match x.shape[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "conv input must be 4-d, got {:?}",
                x.shape
            )))
        }
    };
    let (c_out, kc, kh, kw) = match kernels.shape[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "conv kernels must be 4-d, got {:?}",
                kernels.shape
            )))
        }
    };
    if kc != c_in {
        return Err(NnError::ShapeMismatch(format!(
            "conv: input has {c_in} channels, kernels expect {kc}"
        )));
    }
    if kh > h || kw > w {
        return Err(NnError::WindowTooLarge { kh, kw, h, w });
    }
    if stride == 0 {
        return Err(NnError::ShapeMismatch("stride must be positive".into()));
    }
    Ok((batch, c_in, h, w, c_out, kh, kw, stride))
}

/// Valid cross-correlation: `x: [B, C, H, W]`, `kernels: [O, C, kh, kw]`,
/// `bias: [O]`, output `[B, O, (H-kh)/stride+1, (W-kw)/stride+1]`.
pub fn conv2d_forward(
    x: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<Tensor, NnError> {
    let (batch, c_in, h, w, c_out, kh, kw, s) = conv_dims(x, kernels, stride)?;
    if bias.shape != [c_out] {
        return Err(NnError::ShapeMismatch(format!(
            "conv bias {:?} for {c_out} output channels",
            bias.shape
        )));
    }
    let h_out = (h - kh) / s + 1;
    let w_out = (w - kw) / s + 1;
    let mut y = vec![0.0; batch * c_out * h_out * w_out];
    for b in 0..batch {
        for o in 0..c_out {
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let mut acc = bias.data[o];
                    for c in 0..c_in {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy * s + ky;
                                let ix = ox * s + kx;
                                acc += x.data[((b * c_in + c) * h + iy) * w + ix]
                                    * kernels.data[((o * c_in + c) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    y[((b * c_out + o) * h_out + oy) * w_out + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![batch, c_out, h_out, w_out], y)
}

/// Gradients of the convolution: `(grad_x, grad_kernels, grad_bias)`.
pub fn conv2d_backward(
    x: &Tensor,
    kernels: &Tensor,
    stride: usize,
    grad_y: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (batch, c_in, h, w, c_out, kh, kw, s) = conv_dims(x, kernels, stride)?;
    let h_out = (h - kh) / s + 1;
    let w_out = (w - kw) / s + 1;
    if grad_y.shape != [batch, c_out, h_out, w_out] {
        return Err(NnError::ShapeMismatch(format!(
            "conv backward: grad {:?}, expected {:?}",
            grad_y.shape,
            [batch, c_out, h_out, w_out]
        )));
    }
    let mut gx = vec![0.0; x.numel()];
    let mut gk = vec![0.0; kernels.numel()];
    let mut gb = vec![0.0; c_out];
    for b in 0..batch {
        for o in 0..c_out {
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let g = grad_y.data[((b * c_out + o) * h_out + oy) * w_out + ox];
                    gb[o] += g;
                    for c in 0..c_in {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy * s + ky;
                                let ix = ox * s + kx;
                                gx[((b * c_in + c) * h + iy) * w + ix] +=
                                    g * kernels.data[((o * c_in + c) * kh + ky) * kw + kx];
                                gk[((o * c_in + c) * kh + ky) * kw + kx] +=
                                    g * x.data[((b * c_in + c) * h + iy) * w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape.clone(), gx)?,
        Tensor::new(kernels.shape.clone(), gk)?,
        Tensor::new(vec![c_out], gb)?,
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Subgradient 0 at the kink.
pub fn relu_backward(x: &Tensor, grad_y: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&grad_y.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// Row-wise softmax with max subtraction for stability.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    let (batch, classes) = dims2(logits, "logits")?;
    let mut out = vec![0.0; batch * classes];
    for i in 0..batch {
        let row = &logits.data[i * classes..(i + 1) * classes];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - m).exp();
            out[i * classes + j] = e;
            sum += e;
        }
        for j in 0..classes {
            out[i * classes + j] /= sum;
        }
    }
    Tensor::new(vec![batch, classes], out)
}

/// Mean negative log-likelihood over the batch, plus the analytic gradient
/// with respect to the logits: `(softmax - onehot) / batch`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let (batch, classes) = dims2(logits, "logits")?;
    if labels.len() != batch {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(NnError::Empty("cross entropy of an empty batch".into()));
    }
    for &label in labels {
        if label >= classes {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0;
    let mut grad = probs.data.clone();
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits.data[i * classes..(i + 1) * classes];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsumexp = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += logsumexp - row[label];
        grad[i * classes + label] -= 1.0;
    }
    let scale = 1.0 / batch as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok((loss * scale, Tensor::new(vec![batch, classes], grad)?))
}
