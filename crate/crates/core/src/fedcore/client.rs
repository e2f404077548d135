use super::config::{Algo, ClientState, FederationConfig};
use crate::error::{shape, Error, Result};
use crate::model::{
    backward_into, forward, onehot_residual, softmax_xent, ModelConfig, ParamVector,
};
use crate::numkernel::{dot, norm, Rng};

/// `cos(a, b)` and its gradient with respect to `a`. Zero vectors give a
/// cosine of 0 with zero gradient.
fn cosine_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return (0.0, vec![0.0; a.len()]);
    }
    let c = dot(a, b) / (na * nb);
    let g = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| bi / (na * nb) - c * ai / (na * na))
        .collect();
    (c, g)
}

/// Contrastive term pulling `z` towards the global model's representation
/// and away from the previous local one:
/// `-log(exp(cos(z,g)/τ) / (exp(cos(z,g)/τ) + exp(cos(z,p)/τ)))`.
pub fn moon_contrastive(z: &[f64], z_glob: &[f64], z_prev: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    if z.len() != z_glob.len() || z.len() != z_prev.len() {
        return Err(shape("representation widths differ"));
    }
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("temperature must be positive, got {tau}")));
    }
    let (c_glob, g_glob) = cosine_with_grad(z, z_glob);
    let (c_prev, g_prev) = cosine_with_grad(z, z_prev);
    let d = (c_prev - c_glob) / tau;
    // softplus(d), with p = sigmoid(d) its derivative.
    let loss = d.max(0.0) + (-d.abs()).exp().ln_1p();
    let p = crate::numkernel::sigmoid(d);
    let grad = g_glob
        .iter()
        .zip(&g_prev)
        .map(|(gg, gp)| p * (gp - gg) / tau)
        .collect();
    Ok((loss, grad))
}

/// Runs the client's local epochs starting from `global`. Returns the trained
/// parameters and the mean per-batch objective.
pub fn local_train(
    client: &mut ClientState,
    global: &ParamVector,
    cfg: &FederationConfig,
    model_cfg: &ModelConfig,
    rng: &mut Rng,
) -> Result<(ParamVector, f64)> {
    let samples = &client.dataset.samples;
    if samples.is_empty() {
        return Err(Error::Protocol(format!("client {} has no samples", client.id)));
    }
    let prox = cfg.algo == Algo::FedProx && cfg.mu_prox != 0.0;
    let moon = cfg.algo == Algo::Moon && cfg.mu_moon != 0.0;
    let prev = if moon {
        let p = client.prev_local.as_ref().unwrap_or(global);
        global.check_layout(p)?;
        Some(p)
    } else {
        None
    };

    let mut params = global.clone();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for _ in 0..cfg.local_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grad = params.zeros_like();
            let mut batch_loss = 0.0;
            for &k in batch {
                let s = &samples[k];
                let y = s.label_index();
                let cache = forward(&params, model_cfg, s.into())?;
                let (l, probs) = softmax_xent(cache.logits, y);
                batch_loss += l * scale;
                let r = onehot_residual(probs, y);
                let d_logits = [r[0] * scale, r[1] * scale];
                let d_repr = match prev {
                    Some(prev) => {
                        let z_glob = forward(global, model_cfg, s.into())?;
                        let z_prev = forward(prev, model_cfg, s.into())?;
                        let (lc, dz) = moon_contrastive(
                            cache.representation(),
                            z_glob.representation(),
                            z_prev.representation(),
                            cfg.tau_moon,
                        )?;
                        batch_loss += cfg.mu_moon * lc * scale;
                        Some(dz.into_iter().map(|g| cfg.mu_moon * g * scale).collect::<Vec<_>>())
                    }
                    None => None,
                };
                backward_into(&params, model_cfg, &cache, d_logits, d_repr.as_deref(), &mut grad)?;
            }
            if prox {
                let diff = params.sub(global)?;
                batch_loss += 0.5 * cfg.mu_prox * diff.norm().powi(2);
                grad.axpy(cfg.mu_prox, &diff)?;
            }
            params.axpy(-cfg.client_lr, &grad)?;
            loss_sum += batch_loss;
            batches += 1;
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric(format!(
            "client {} diverged (client_lr {})",
            client.id, cfg.client_lr
        )));
    }
    if cfg.algo == Algo::Moon {
        client.prev_local = Some(params.clone());
    }
    Ok((params, loss_sum / batches as f64))
}
