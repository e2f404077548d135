use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::numkernel::Rng;

/// Default Monte Carlo budget for [`chance_f1`].
pub const DEFAULT_CHANCE_TRIALS: usize = 100_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts with the roles of the two classes exchanged.
    pub fn flipped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub mcc: f64,
}

fn check_lengths(probs: &[f64], labels: &[u8]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Positive iff `prob >= threshold`.
pub fn confusion(probs: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    check_lengths(probs, labels)?;
    let mut c = ConfusionCounts::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(c: &ConfusionCounts) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// Metrics on the positive class. Undefined ratios are reported as 0.
pub fn core_metrics(c: &ConfusionCounts) -> Result<CoreMetrics> {
    if c.total() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let marginals = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if marginals == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / marginals.sqrt()
    };
    Ok(CoreMetrics {
        f1: f1_of(c),
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        accuracy: ratio(c.tp + c.tn, c.total()),
        mcc,
    })
}

/// Support-weighted mean of the per-class F1 scores.
pub fn weighted_f1(probs: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let c = confusion(probs, labels, threshold)?;
    if c.total() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let pos = (c.tp + c.fn_) as f64;
    let neg = (c.tn + c.fp) as f64;
    Ok((pos * f1_of(&c) + neg * f1_of(&c.flipped())) / c.total() as f64)
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
pub fn auc_rank(probs: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(probs, labels)?;
    let n_pos = labels.iter().filter(|&&y| y != 0).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::Numeric("NaN probability".into()));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // Twice the number of correctly ordered pairs, so ties stay integral.
    let mut doubled: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos_here = group.iter().filter(|&&k| labels[k] != 0).count() as u64;
        let neg_here = group.len() as u64 - pos_here;
        doubled += pos_here * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    Ok(doubled as f64 / (2 * n_pos * n_neg) as f64)
}

/// Expected binary F1 of a predictor that says "positive" independently
/// with probability `rate`, estimated from `trials` draws.
pub fn chance_f1(labels: &[u8], rate: f64, trials: usize, rng: &mut Rng) -> Result<f64> {
    if trials == 0 {
        return Err(crate::error::config("chance F1 needs at least one trial"));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(crate::error::config(format!("predictor rate {rate} outside [0, 1]")));
    }
    let pos = labels.iter().filter(|&&y| y != 0).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 {
        return Ok(0.0);
    }
    let bp = Binomial::new(pos, rate).expect("valid binomial");
    let bn = Binomial::new(neg, rate).expect("valid binomial");
    let mut sum = 0.0;
    for _ in 0..trials {
        let tp = rng.sample(&bp);
        let fp = rng.sample(&bn);
        sum += ratio(2 * tp, tp + fp + pos);
    }
    Ok(sum / trials as f64)
}

/// Signed distance above the chance level.
pub fn above_chance(f1: f64, chance: f64) -> f64 {
    f1 - chance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path;
    use proptest::prelude::*;
    use crate::numkernel::Rng;

    #[test]
    fn perfect_predictor() {
        let labels = [1, 0, 1, 1, 0];
        let probs: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
        let c = confusion(&probs, &labels, 0.5).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(weighted_f1(&probs, &labels, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn ties_are_positive() {
        let c = confusion(&[0.5; 4], &[0, 1, 0, 1], 0.5).unwrap();
        assert_eq!(c.tp + c.fp, 4);
        assert!(confusion(&[0.5], &[0, 1], 0.5).is_err());
    }

    #[test]
    fn hand_metrics() {
        let c = ConfusionCounts { tp: 2, fp: 1, tn: 6, fn_: 1 };
        let m = core_metrics(&c).unwrap();
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.accuracy - 0.8).abs() < 1e-15);

        let none = ConfusionCounts { tp: 0, fp: 0, tn: 5, fn_: 3 };
        let m = core_metrics(&none).unwrap();
        assert_eq!((m.f1, m.precision, m.mcc), (0.0, 0.0, 0.0));
        assert!(matches!(
            core_metrics(&ConfusionCounts::default()),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn hand_weighted_f1() {
        let w = weighted_f1(&[1.0, 0.0, 0.0, 0.0], &[1, 1, 0, 0], 0.5).unwrap();
        assert!((w - (0.5 * 2.0 / 3.0 + 0.5 * 0.8)).abs() < 1e-15);
        assert!((w - 0.733).abs() < 1e-3);
    }

    #[test]
    fn auc_edges() {
        assert_eq!(auc_rank(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc_rank(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc_rank(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn chance_without_positives_is_zero() {
        let mut rng = Rng::derive(0, &path!["chance"]);
        assert_eq!(chance_f1(&[0, 0, 0], 0.3, 10, &mut rng).unwrap(), 0.0);
        assert!(chance_f1(&[1], 0.3, 0, &mut rng).is_err());
    }

    #[test]
    fn chance_is_seeded() {
        let labels = [1, 0, 0, 1, 0, 0, 0, 1, 0, 0];
        let a = chance_f1(&labels, 0.3, 1000, &mut Rng::derive(4, &path!["c"])).unwrap();
        let b = chance_f1(&labels, 0.3, 1000, &mut Rng::derive(4, &path!["c"])).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    proptest! {
        #[test]
        fn ranges(probs in proptest::collection::vec(0.0f64..1.0, 2..40), seed in 0u64..1000) {
            let mut rng = Rng::derive(seed, &path!["labels"]);
            let labels: Vec<u8> = probs.iter().map(|_| u8::from(rng.bernoulli(0.4))).collect();
            let m = core_metrics(&confusion(&probs, &labels, 0.5).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.f1));
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m.mcc));
            if let Ok(a) = auc_rank(&probs, &labels) {
                // Strictly monotone transforms preserve the ranking.
                let t: Vec<f64> = probs.iter().map(|p| (3.0 * p).exp() - 7.0).collect();
                prop_assert_eq!(a, auc_rank(&t, &labels).unwrap());
            }
        }
    }
}
