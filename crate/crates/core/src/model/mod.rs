//! The engagement classifier: a stacked bi-LSTM (or a one-hidden-layer MLP)
//! whose representation, optionally concatenated with time-pooled glass
//! features, is projected to two class logits and trained with softmax
//! cross-entropy.

mod config;
mod gradcheck;
mod lstm;
mod mlp;
mod params;

use std::sync::Arc;

pub use config::{Arch, ModelConfig, PROJ_B, PROJ_W};
pub use gradcheck::{
    gradient_check, gradient_check_suite, gradient_check_with_step, random_small_config, suite_case,
    GradCheck, GRADCHECK_FLOOR, GRADCHECK_STEP,
};
pub use lstm::{bilstm_forward, lstm_cell, CellWeights, Direction, GateCache, LstmCache};
pub use mlp::mlp_forward_backward;
pub use params::{weighted_sum, Layout, ParamVector, Segment, FLPV_MAGIC, FLPV_VERSION};

use crate::data::Sample;
use crate::error::{shape, Error, Result};
use crate::numkernel::{Mat, Rng};

/// Borrowed model input: a `T x F` feature matrix and optional `T x G` glass
/// features.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub features: &'a Mat,
    pub glass: Option<&'a Mat>,
}

impl<'a> ModelInput<'a> {
    pub fn new(features: &'a Mat) -> Self {
        Self {
            features,
            glass: None,
        }
    }

    pub fn with_glass(features: &'a Mat, glass: &'a Mat) -> Self {
        Self {
            features,
            glass: Some(glass),
        }
    }
}

impl<'a> From<&'a Sample> for ModelInput<'a> {
    fn from(s: &'a Sample) -> Self {
        Self {
            features: &s.features,
            glass: s.glass.as_ref(),
        }
    }
}

/// Uniform(±1/√fan_in) weights, zero biases, forget-gate biases 1.
pub fn init_params(cfg: &ModelConfig, rng: &mut Rng) -> Result<ParamVector> {
    cfg.validate()?;
    let layout = Arc::new(cfg.layout());
    let mut pv = ParamVector::zeros(layout.clone());
    let values = pv.values_mut();
    for seg in layout.segments() {
        let slot = &mut values[seg.range()];
        if seg.cols == 1 {
            if seg.name.starts_with("lstm.") && seg.name.ends_with(".bias") {
                let h = seg.rows / 4;
                slot[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
            }
        } else {
            let bound = 1.0 / (seg.cols as f64).sqrt();
            for v in slot.iter_mut() {
                *v = rng.uniform_range(-bound, bound);
            }
        }
    }
    Ok(pv)
}

/// Per-dimension mean over time followed by per-dimension population
/// standard deviation.
pub fn glass_summary(glass: &Mat) -> Result<Vec<f64>> {
    let (t_len, dim) = glass.shape();
    if t_len < 2 {
        return Err(Error::Degenerate(format!(
            "glass summary needs at least 2 frames, got {t_len}"
        )));
    }
    let mut mean = vec![0.0; dim];
    for t in 0..t_len {
        for (m, &v) in mean.iter_mut().zip(glass.row(t)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t_len as f64);
    let mut var = vec![0.0; dim];
    for t in 0..t_len {
        for ((s, &v), &m) in var.iter_mut().zip(glass.row(t)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / t_len as f64).sqrt());
    Ok(mean.iter().copied().chain(std).collect())
}

/// `z = W p + b`; row `k` of `W` is the embedding of class `k`.
pub fn project_logits(input: &[f64], params: &ParamVector) -> Result<[f64; 2]> {
    let w = params.segment(PROJ_W)?;
    let b = params.segment(PROJ_B)?;
    let d = w.len() / 2;
    if input.len() != d {
        return Err(shape(format!(
            "projection expects width {d}, got {}",
            input.len()
        )));
    }
    Ok([
        crate::numkernel::dot(&w[..d], input) + b[0],
        crate::numkernel::dot(&w[d..], input) + b[1],
    ])
}

/// Stabilized two-class softmax and the cross-entropy of label `y`.
pub fn softmax_xent(z: [f64; 2], y: usize) -> (f64, [f64; 2]) {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    let probs = [e[0] / s, e[1] / s];
    let loss = m + s.ln() - z[y];
    (loss, probs)
}

#[derive(Clone, Debug)]
enum Body {
    Lstm(LstmCache),
    Mlp { input: Vec<f64>, hidden: Vec<f64> },
}

/// Workspace of one forward pass, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    body: Body,
    proj_input: Vec<f64>,
    readout_dim: usize,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

impl ForwardCache {
    /// Learned representation (bi-LSTM readout or MLP hidden layer).
    pub fn representation(&self) -> &[f64] {
        &self.proj_input[..self.readout_dim]
    }

    /// Representation followed by the glass summary, as projected.
    pub fn projection_input(&self) -> &[f64] {
        &self.proj_input
    }

    pub fn lstm(&self) -> Option<&LstmCache> {
        match &self.body {
            Body::Lstm(c) => Some(c),
            Body::Mlp { .. } => None,
        }
    }

    fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let ok = self.proj_input.len() == cfg.projection_input_dim()
            && self.readout_dim == cfg.readout_dim()
            && match (&self.body, cfg.arch) {
                (Body::Lstm(c), Arch::Bilstm) => {
                    c.seq_len == cfg.seq_len
                        && c.hidden == cfg.hidden
                        && c.layers.len() == cfg.lstm_layers
                }
                (Body::Mlp { input, hidden }, Arch::Mlp) => {
                    input.len() == cfg.seq_len * cfg.feat_dim && hidden.len() == cfg.mlp_hidden
                }
                _ => false,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Cache("cache does not match model configuration".into()))
        }
    }
}

pub fn forward(params: &ParamVector, cfg: &ModelConfig, input: ModelInput<'_>) -> Result<ForwardCache> {
    let layout_total = cfg.param_count();
    if params.len() != layout_total {
        return Err(shape(format!(
            "parameters have {} values, configuration needs {layout_total}",
            params.len()
        )));
    }
    let (body, mut proj_input) = match cfg.arch {
        Arch::Bilstm => {
            let cache = bilstm_forward(input.features, params, cfg)?;
            let readout = cache.readout.clone();
            (Body::Lstm(cache), readout)
        }
        Arch::Mlp => {
            let (x, hidden) = mlp::forward(input.features, params, cfg)?;
            let h = hidden.clone();
            (Body::Mlp { input: x, hidden }, h)
        }
    };
    if cfg.glass_fusion {
        let glass = input
            .glass
            .ok_or_else(|| shape("glass fusion enabled but sample has no glass features"))?;
        if glass.cols() != cfg.glass_dim || glass.rows() != cfg.seq_len {
            return Err(shape(format!(
                "glass features are {}x{}, expected {}x{}",
                glass.rows(),
                glass.cols(),
                cfg.seq_len,
                cfg.glass_dim
            )));
        }
        proj_input.extend(glass_summary(glass)?);
    }
    let logits = project_logits(&proj_input, params)?;
    let (_, probs) = softmax_xent(logits, 0);
    Ok(ForwardCache {
        body,
        proj_input,
        readout_dim: cfg.readout_dim(),
        logits,
        probs,
    })
}

/// Accumulates into `grad` the gradient of a scalar with derivative
/// `d_logits` at the logits plus `d_repr` directly at the representation.
pub fn backward_into(
    params: &ParamVector,
    cfg: &ModelConfig,
    cache: &ForwardCache,
    d_logits: [f64; 2],
    d_repr: Option<&[f64]>,
    grad: &mut ParamVector,
) -> Result<()> {
    cache.check(cfg)?;
    params.check_layout(grad)?;
    let p = &cache.proj_input;
    let d = p.len();
    {
        let gw = grad.segment_mut(PROJ_W)?;
        crate::numkernel::axpy(d_logits[0], p, &mut gw[..d]);
        crate::numkernel::axpy(d_logits[1], p, &mut gw[d..]);
    }
    {
        let gb = grad.segment_mut(PROJ_B)?;
        gb[0] += d_logits[0];
        gb[1] += d_logits[1];
    }
    let w = params.segment(PROJ_W)?;
    let rd = cache.readout_dim;
    let mut d_rep: Vec<f64> = (0..rd)
        .map(|j| w[j] * d_logits[0] + w[d + j] * d_logits[1])
        .collect();
    if let Some(extra) = d_repr {
        if extra.len() != rd {
            return Err(shape("representation gradient width mismatch"));
        }
        for (a, b) in d_rep.iter_mut().zip(extra) {
            *a += b;
        }
    }
    match &cache.body {
        Body::Lstm(c) => lstm::bilstm_backward(c, &d_rep, params, cfg, grad),
        Body::Mlp { input, hidden } => mlp::backward(input, hidden, &d_rep, grad),
    }
}

/// Exact gradient of the cross-entropy of label `y` with respect to every
/// parameter.
pub fn model_backward(
    cache: &ForwardCache,
    y: usize,
    params: &ParamVector,
    cfg: &ModelConfig,
) -> Result<ParamVector> {
    let mut grad = params.zeros_like();
    backward_into(params, cfg, cache, onehot_residual(cache.probs, y), None, &mut grad)?;
    Ok(grad)
}

/// `probs - onehot(y)`.
pub fn onehot_residual(probs: [f64; 2], y: usize) -> [f64; 2] {
    let mut r = probs;
    r[y] -= 1.0;
    r
}

/// Loss of one sample; gradient (scaled by `scale`) accumulated into `grad`.
pub fn loss_grad_into(
    params: &ParamVector,
    cfg: &ModelConfig,
    input: ModelInput<'_>,
    y: usize,
    scale: f64,
    grad: &mut ParamVector,
) -> Result<f64> {
    let cache = forward(params, cfg, input)?;
    let (loss, probs) = softmax_xent(cache.logits, y);
    let r = onehot_residual(probs, y);
    backward_into(params, cfg, &cache, [r[0] * scale, r[1] * scale], None, grad)?;
    Ok(loss)
}

pub fn loss(params: &ParamVector, cfg: &ModelConfig, input: ModelInput<'_>, y: usize) -> Result<f64> {
    let cache = forward(params, cfg, input)?;
    Ok(softmax_xent(cache.logits, y).0)
}

/// Probability of the positive class.
pub fn predict(params: &ParamVector, cfg: &ModelConfig, sample: &Sample) -> Result<f64> {
    Ok(forward(params, cfg, sample.into())?.probs[1])
}

pub fn predict_many(params: &ParamVector, cfg: &ModelConfig, samples: &[&Sample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| predict(params, cfg, s)).collect()
}
