use crate::error::{shape, Error, Result};
use crate::model::{ParamVector, PROJ_W};
use crate::optim::{adam_step, sgd_step, AdamState, SgdConfig};
use crate::numkernel::Rng;

/// `|D_i| / Σ_j |D_j|` over the round's participants.
pub fn aggregation_weights(sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::Protocol("no participants to weight".into()));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::Protocol("participants hold no samples".into()));
    }
    Ok(sizes.iter().map(|&s| s as f64 / total as f64).collect())
}

/// Coordinate-wise weighted mean. Each coordinate sums its terms in a
/// canonical order, so the result does not depend on participant order, and
/// a coordinate on which all locals agree is returned unchanged.
pub fn aggregate_fedavg(locals: &[&ParamVector], weights: &[f64]) -> Result<ParamVector> {
    let first = *locals
        .first()
        .ok_or_else(|| Error::Protocol("no local models to aggregate".into()))?;
    if locals.len() != weights.len() {
        return Err(shape(format!(
            "{} local models but {} weights",
            locals.len(),
            weights.len()
        )));
    }
    for l in &locals[1..] {
        first.check_layout(l)?;
    }
    let mut out = first.clone();
    let mut terms = Vec::with_capacity(locals.len());
    for (j, o) in out.values_mut().iter_mut().enumerate() {
        let v0 = first.values()[j];
        if locals.iter().all(|l| l.values()[j] == v0) {
            continue;
        }
        terms.clear();
        terms.extend(locals.iter().zip(weights).map(|(l, &w)| w * l.values()[j]));
        terms.sort_by(f64::total_cmp);
        *o = terms.iter().sum();
    }
    Ok(out)
}

/// Server-side update rule fed with the pseudo-gradient `-Δ`.
#[derive(Clone, Debug)]
pub enum ServerOptimizer {
    Adam(AdamState),
    Sgd(SgdConfig),
}

impl ServerOptimizer {
    pub fn step(&mut self, params: &ParamVector, grad: &ParamVector) -> Result<ParamVector> {
        match self {
            ServerOptimizer::Adam(state) => adam_step(state, params, grad),
            ServerOptimizer::Sgd(cfg) => sgd_step(params, grad, *cfg),
        }
    }
}

/// Treats `-Σ w_i (θ_i - θ)` as a gradient for the server optimizer.
pub fn aggregate_fedadam(
    server: &mut ServerOptimizer,
    global: &ParamVector,
    locals: &[&ParamVector],
    weights: &[f64],
) -> Result<ParamVector> {
    let avg = aggregate_fedavg(locals, weights)?;
    global.check_layout(&avg)?;
    let pseudo_grad = global.sub(&avg)?;
    server.step(global, &pseudo_grad)
}

/// One gradient step on `max(0, ν - ‖w_0 - w_1‖)²` over the two class
/// embeddings. A tie `w_0 = w_1` is broken along a unit vector from `rng`.
pub fn server_fedaws_spreadout(
    global: &ParamVector,
    margin: f64,
    server_lr: f64,
    rng: &mut Rng,
) -> Result<ParamVector> {
    let mut out = global.clone();
    let w = out.segment_mut(PROJ_W)?;
    let d = w.len() / 2;
    let (w0, w1) = w.split_at_mut(d);
    let diff: Vec<f64> = w0.iter().zip(w1.iter()).map(|(a, b)| a - b).collect();
    let dist = crate::numkernel::norm(&diff);
    if dist >= margin {
        return Ok(out);
    }
    let dir = if dist > 0.0 {
        diff.iter().map(|x| x / dist).collect()
    } else {
        rng.unit_vector(d)
    };
    let step = 2.0 * server_lr * (margin - dist);
    for ((a, b), u) in w0.iter_mut().zip(w1.iter_mut()).zip(&dir) {
        *a += step * u;
        *b -= step * u;
    }
    Ok(out)
}
