//! Why a soft-voting ensemble cannot be swayed by one member while a
//! parameter average can, shown on single-neuron models `σ(w·x + b)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::sigmoid;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub n_models: usize,
    pub base_output: f64,
    pub threshold: f64,
    /// Rise in one member's output needed to move the soft vote to the
    /// threshold: `n · (threshold − base)`.
    pub required_vote_increase: f64,
    /// Whether that rise stays inside the `[0, 1]` output range.
    pub vote_increase_feasible: bool,
    /// Best soft vote reachable when one member outputs 1.
    pub max_soft_vote: f64,
    pub soft_vote_flips: bool,
    /// `logit(threshold) − logit(base)`.
    pub required_logit_increase: f64,
    /// Bias rise on one member that moves the averaged model's logit by the
    /// required amount: `n · required_logit_increase`.
    pub required_bias_increase: f64,
    /// Averaged-model output just below and just above the required bias
    /// rise (relative offset 1e-9).
    pub averaged_output_below: f64,
    pub averaged_output_above: f64,
    pub averaged_flips: bool,
    /// The required bias rise rounded to one decimal, and what the averaged
    /// model outputs with exactly that rise.
    pub rounded_bias_increase: f64,
    pub averaged_output_at_rounded: f64,
    pub flips_at_rounded: bool,
}

/// Builds `n_models` identical single-neuron models emitting `base_output`
/// on input `x = 1` and measures what it takes to cross `threshold`.
pub fn toy_vote_vs_average(n_models: usize, base_output: f64, threshold: f64) -> Result<ToyReport> {
    if n_models == 0 {
        return Err(Error::Precondition("toy needs at least one model".into()));
    }
    if !(base_output > 0.0 && base_output < threshold && threshold < 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 < base_output < threshold < 1, got {base_output} and {threshold}"
        )));
    }
    let n = n_models as f64;
    let weight = logit(base_output);
    let x = 1.0;

    let required_vote_increase = n * (threshold - base_output);
    let vote_increase_feasible = base_output + required_vote_increase <= 1.0;
    let max_soft_vote = ((n - 1.0) * base_output + 1.0) / n;

    let required_logit_increase = logit(threshold) - logit(base_output);
    let required_bias_increase = n * required_logit_increase;

    // Parameter average after raising one member's bias by `delta`.
    let averaged = |delta: f64| {
        let w_bar = weight;
        let b_bar = delta / n;
        sigmoid(w_bar * x + b_bar)
    };
    let averaged_output_below = averaged(required_bias_increase * (1.0 - 1e-9));
    let averaged_output_above = averaged(required_bias_increase * (1.0 + 1e-9));
    let rounded_bias_increase = (required_bias_increase * 10.0).round() / 10.0;
    let averaged_output_at_rounded = averaged(rounded_bias_increase);

    Ok(ToyReport {
        n_models,
        base_output,
        threshold,
        required_vote_increase,
        vote_increase_feasible,
        max_soft_vote,
        soft_vote_flips: max_soft_vote >= threshold,
        required_logit_increase,
        required_bias_increase,
        averaged_output_below,
        averaged_output_above,
        averaged_flips: averaged_output_below < threshold && averaged_output_above >= threshold,
        rounded_bias_increase,
        averaged_output_at_rounded,
        flips_at_rounded: averaged_output_at_rounded >= threshold,
    })
}
