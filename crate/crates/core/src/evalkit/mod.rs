//! Binary classification metrics and cross-seed aggregation.

mod metrics;
mod summary;

pub use metrics::{
    above_chance, auc_rank, chance_f1, confusion, core_metrics, weighted_f1, ConfusionCounts,
    CoreMetrics, DEFAULT_CHANCE_TRIALS,
};
pub use summary::{aggregate_seeds, evaluate, Metrics, MetricsSummary, Stat, METRIC_COLUMNS};
