use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{above_chance, auc_rank, chance_f1, confusion, core_metrics, weighted_f1};
use crate::error::{config, Result};
use crate::numkernel::Rng;

/// Metric columns in report order.
pub const METRIC_COLUMNS: [&str; 8] = [
    "f1_binary",
    "ac",
    "precision",
    "recall",
    "f1_weighted",
    "accuracy",
    "auc",
    "mcc",
];

/// Every metric of one evaluation, stored as fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub f1_binary: f64,
    pub ac: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_weighted: f64,
    pub accuracy: f64,
    /// Absent when the evaluated labels hold a single class.
    pub auc: Option<f64>,
    pub mcc: f64,
    pub chance_f1: f64,
}

impl Metrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "f1_binary" => Some(self.f1_binary),
            "ac" => Some(self.ac),
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "f1_weighted" => Some(self.f1_weighted),
            "accuracy" => Some(self.accuracy),
            "auc" => self.auc,
            "mcc" => Some(self.mcc),
            "chance_f1" => Some(self.chance_f1),
            _ => None,
        }
    }
}

/// Full metric suite for one set of predictions.
pub fn evaluate(
    probs: &[f64],
    labels: &[u8],
    threshold: f64,
    train_pos_rate: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<Metrics> {
    let core = core_metrics(&confusion(probs, labels, threshold)?)?;
    let chance = chance_f1(labels, train_pos_rate, trials, rng)?;
    Ok(Metrics {
        f1_binary: core.f1,
        ac: above_chance(core.f1, chance),
        precision: core.precision,
        recall: core.recall,
        f1_weighted: weighted_f1(probs, labels, threshold)?,
        accuracy: core.accuracy,
        auc: auc_rank(probs, labels).ok(),
        mcc: core.mcc,
        chance_f1: chance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    /// Welford's update, divisor `n - 1`.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, &x) in values.iter().enumerate() {
            let d = x - mean;
            mean += d / (k + 1) as f64;
            m2 += d * (x - mean);
        }
        let n = values.len();
        let std = (n > 1).then(|| (m2 / (n - 1) as f64).sqrt());
        Some(Stat { mean, std, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub per_seed: Vec<Metrics>,
    /// Keyed by the names in [`METRIC_COLUMNS`] plus `chance_f1`; a metric
    /// no seed defines is absent.
    pub stats: BTreeMap<String, Stat>,
}

impl MetricsSummary {
    pub fn stat(&self, name: &str) -> Option<Stat> {
        self.stats.get(name).copied()
    }
}

pub fn aggregate_seeds(per_seed: &[Metrics]) -> Result<MetricsSummary> {
    if per_seed.is_empty() {
        return Err(config("cannot aggregate an empty list of seeds"));
    }
    let stats = METRIC_COLUMNS
        .iter()
        .chain(std::iter::once(&"chance_f1"))
        .filter_map(|&name| {
            let values: Vec<f64> = per_seed.iter().filter_map(|m| m.get(name)).collect();
            Stat::of(&values).map(|s| (name.to_string(), s))
        })
        .collect();
    Ok(MetricsSummary {
        per_seed: per_seed.to_vec(),
        stats,
    })
}
