//! Plain SGD for clients, Adam for the server.

use serde::{Deserialize, Serialize};

use crate::error::{config, format_err, Result};
use crate::model::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
}

impl SgdConfig {
    pub fn new(lr: f64) -> Result<Self> {
        // lr = 0 is allowed so that zero-step runs can be expressed.
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(config(format!("SGD learning rate must be finite and non-negative, got {lr}")));
        }
        Ok(Self { lr })
    }
}

/// `params - lr * grads`
pub fn sgd_step(params: &ParamVector, grads: &ParamVector, cfg: SgdConfig) -> Result<ParamVector> {
    let mut out = params.clone();
    out.axpy(-cfg.lr, grads)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-3,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(config("Adam betas must lie in [0, 1)"));
        }
        if self.eps <= 0.0 || self.lr < 0.0 {
            return Err(config("Adam needs eps > 0 and lr >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub m: ParamVector,
    pub v: ParamVector,
    pub t: u64,
}

const ADAM_MAGIC: &[u8; 4] = b"FLAS";

impl AdamState {
    pub fn new(cfg: AdamConfig, like: &ParamVector) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        })
    }

    /// `"FLAS" | lr, beta1, beta2, eps: f64 | t: u64 | FLPV(m) | FLPV(v)`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ADAM_MAGIC);
        for x in [self.cfg.lr, self.cfg.beta1, self.cfg.beta2, self.cfg.eps] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend(self.m.to_bytes());
        out.extend(self.v.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != ADAM_MAGIC {
            return Err(format_err(0, "bad Adam state magic"));
        }
        if bytes.len() < 44 {
            return Err(format_err(bytes.len(), "truncated Adam state header"));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().unwrap());
        let cfg = AdamConfig {
            lr: f(0),
            beta1: f(1),
            beta2: f(2),
            eps: f(3),
        };
        let t = u64::from_le_bytes(bytes[36..44].try_into().unwrap());
        let (m, used_m) = ParamVector::read_block(&bytes[44..], 44)?;
        let (v, used_v) = ParamVector::read_block(&bytes[44 + used_m..], 44 + used_m)?;
        let end = 44 + used_m + used_v;
        if end != bytes.len() {
            return Err(format_err(end, "trailing bytes after Adam state"));
        }
        m.check_layout(&v)?;
        Ok(Self { cfg, m, v, t })
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    state: &mut AdamState,
    params: &ParamVector,
    grads: &ParamVector,
) -> Result<ParamVector> {
    params.check_layout(grads)?;
    params.check_layout(&state.m)?;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.cfg;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let mut out = params.clone();
    let m = state.m.values_mut();
    let v = state.v.values_mut();
    for (((p, &g), mi), vi) in out
        .values_mut()
        .iter_mut()
        .zip(grads.values())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(out)
}
