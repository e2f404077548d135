//! One-hidden-layer tanh network over the flattened (downsampled) sequence.

use std::sync::Arc;

use super::config::{Arch, ModelConfig};
use super::params::ParamVector;
use super::{project_logits, softmax_xent, onehot_residual, PROJ_B, PROJ_W};
use crate::error::{shape, Result};
use crate::numkernel::{axpy, dot, Mat};

pub(crate) fn forward(
    features: &Mat,
    params: &ParamVector,
    cfg: &ModelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_in = cfg.seq_len * cfg.feat_dim;
    if features.rows() * features.cols() != n_in {
        return Err(shape(format!(
            "MLP expects {} inputs, got {}",
            n_in,
            features.rows() * features.cols()
        )));
    }
    let x = features.as_slice().to_vec();
    let w = params.segment("mlp.w")?;
    let b = params.segment("mlp.b")?;
    let hidden = (0..cfg.mlp_hidden)
        .map(|r| (b[r] + dot(&w[r * n_in..(r + 1) * n_in], &x)).tanh())
        .collect();
    Ok((x, hidden))
}

pub(crate) fn backward(
    input: &[f64],
    hidden: &[f64],
    d_hidden: &[f64],
    grad: &mut ParamVector,
) -> Result<()> {
    let n_in = input.len();
    let dz: Vec<f64> = hidden
        .iter()
        .zip(d_hidden)
        .map(|(h, d)| d * (1.0 - h * h))
        .collect();
    {
        let gw = grad.segment_mut("mlp.w")?;
        for (r, &d) in dz.iter().enumerate() {
            axpy(d, input, &mut gw[r * n_in..(r + 1) * n_in]);
        }
    }
    let gb = grad.segment_mut("mlp.b")?;
    for (g, d) in gb.iter_mut().zip(&dz) {
        *g += d;
    }
    Ok(())
}

/// Logits, loss and analytic gradient of the MLP on a flattened input.
pub fn mlp_forward_backward(
    x_flat: &[f64],
    y: usize,
    params: &ParamVector,
    cfg: &ModelConfig,
) -> Result<([f64; 2], f64, ParamVector)> {
    if cfg.arch != Arch::Mlp {
        return Err(shape("configuration is not an MLP"));
    }
    if cfg.glass_fusion {
        return Err(shape("flattened MLP entry point takes no glass features"));
    }
    let n_in = cfg.seq_len * cfg.feat_dim;
    if x_flat.len() != n_in {
        return Err(shape(format!("MLP expects {n_in} inputs, got {}", x_flat.len())));
    }
    let m = Mat::new(1, n_in, x_flat.to_vec())?;
    let (x, hidden) = forward(&m, params, cfg)?;
    let logits = project_logits(&hidden, params)?;
    let (loss, probs) = softmax_xent(logits, y);
    let r = onehot_residual(probs, y);
    let mut grad = ParamVector::zeros(Arc::clone(params.layout()));
    {
        let gw = grad.segment_mut(PROJ_W)?;
        let d = hidden.len();
        axpy(r[0], &hidden, &mut gw[..d]);
        axpy(r[1], &hidden, &mut gw[d..]);
    }
    {
        let gb = grad.segment_mut(PROJ_B)?;
        gb[0] += r[0];
        gb[1] += r[1];
    }
    let w = params.segment(PROJ_W)?;
    let d = hidden.len();
    let d_hidden: Vec<f64> = (0..d).map(|j| w[j] * r[0] + w[d + j] * r[1]).collect();
    backward(&x, &hidden, &d_hidden, &mut grad)?;
    Ok((logits, loss, grad))
}
