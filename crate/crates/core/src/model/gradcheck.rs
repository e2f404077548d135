use serde::{Deserialize, Serialize};

use super::{forward, init_params, loss, model_backward, ModelConfig, ModelInput, ParamVector};
use crate::error::Result;
use crate::numkernel::{finite_diff_grad, max_relative_error, Mat, Rng};
use crate::path;

/// Step of the central differences.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Analytic entries at or below this magnitude are skipped.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub config: ModelConfig,
    pub n_params: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
}

/// A small configuration: `T <= 6`, `F <= 4`, `H <= 5`, at most two layers,
/// glass fusion half the time and an MLP one time in five.
pub fn random_small_config(rng: &mut Rng) -> ModelConfig {
    let t = 2 + rng.below(5);
    let f = 1 + rng.below(4);
    let h = 1 + rng.below(5);
    let layers = 1 + rng.below(2);
    let mut cfg = ModelConfig::small(t, f, h, layers);
    if rng.below(5) == 0 {
        cfg = cfg.mlp(1 + rng.below(5));
    }
    if rng.below(2) == 0 {
        cfg = cfg.with_glass(1 + rng.below(3));
    }
    cfg
}

/// Compares the analytic cross-entropy gradient with central differences at
/// a random initialization and random input drawn from `rng`.
pub fn gradient_check(cfg: &ModelConfig, rng: &mut Rng) -> Result<GradCheck> {
    gradient_check_with_step(cfg, rng, GRADCHECK_STEP)
}

/// As [`gradient_check`] with difference step `h`.
pub fn gradient_check_with_step(cfg: &ModelConfig, rng: &mut Rng, h: f64) -> Result<GradCheck> {
    cfg.validate()?;
    let params = init_params(cfg, &mut rng.child(&path!["init"]))?;
    let x = Mat::from_fn(cfg.seq_len, cfg.feat_dim, |_, _| rng.normal());
    let g = cfg
        .glass_fusion
        .then(|| Mat::from_fn(cfg.seq_len, cfg.glass_dim, |_, _| rng.normal()));
    let input = ModelInput {
        features: &x,
        glass: g.as_ref(),
    };
    let y = rng.below(2);
    let cache = forward(&params, cfg, input)?;
    let analytic = model_backward(&cache, y, &params, cfg)?;
    let layout = params.layout().clone();
    let numeric = finite_diff_grad(
        |v| {
            ParamVector::from_values(layout.clone(), v.to_vec())
                .and_then(|p| loss(&p, cfg, input, y))
                .unwrap_or(f64::NAN)
        },
        params.values(),
        h,
    )?;
    let (max_rel_error, worst_index) = max_relative_error(analytic.values(), &numeric, GRADCHECK_FLOOR);
    Ok(GradCheck {
        config: cfg.clone(),
        n_params: params.len(),
        max_rel_error,
        worst_index,
    })
}

/// Check `k` of the suite drawn from `seed`, with difference step `h`.
pub fn suite_case(seed: u64, k: usize, h: f64) -> Result<GradCheck> {
    let mut rng = Rng::derive(seed, &path!["gradcheck", k]);
    let cfg = random_small_config(&mut rng.child(&path!["config"]));
    gradient_check_with_step(&cfg, &mut rng, h)
}

/// `n` checks on random small configurations derived from `seed`.
pub fn gradient_check_suite(n: usize, seed: u64) -> Result<Vec<GradCheck>> {
    (0..n).map(|k| suite_case(seed, k, GRADCHECK_STEP)).collect()
}
