use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_centralized, CentralConfig};
use crate::data::{Sample, UserDataset};
use crate::error::{config, format_err, Error, Result};
use crate::model::{predict, ModelConfig, ParamVector};
use crate::numkernel::Rng;
use crate::path;

pub const DEFAULT_LEARNERS: usize = 15;
pub const DEFAULT_BAGGING_BATCH: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaggingConfig {
    pub n_learners: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Train every learner on the full corpus instead of a bootstrap draw.
    pub disable_bootstrap: bool,
    /// Give every learner the same rng path (and so the same initialization).
    pub shared_init: bool,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        Self {
            n_learners: DEFAULT_LEARNERS,
            lr: 1e-3,
            epochs: 8,
            batch_size: DEFAULT_BAGGING_BATCH,
            disable_bootstrap: false,
            shared_init: false,
        }
    }
}

/// Draws `n` user-level bootstrap subsets. Users are drawn with replacement
/// until the subset holds at least as many samples as the whole corpus.
/// Each subset is a list of indices into `users`.
pub fn bootstrap_userwise(users: &[UserDataset], n: usize, rng: &Rng) -> Result<Vec<Vec<usize>>> {
    if users.is_empty() {
        return Err(config("bootstrap needs at least one user"));
    }
    let total: usize = users.iter().map(UserDataset::len).sum();
    if total == 0 {
        return Err(config("bootstrap corpus holds no samples"));
    }
    Ok((0..n)
        .map(|k| {
            let mut r = rng.child(&path!["bootstrap", k]);
            let mut picked = Vec::new();
            let mut size = 0;
            while size < total {
                let u = r.below(users.len());
                size += users[u].len();
                picked.push(u);
            }
            picked
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub learners: Vec<ParamVector>,
}

impl Ensemble {
    pub fn new(learners: Vec<ParamVector>) -> Result<Self> {
        if let Some(first) = learners.first() {
            for l in &learners[1..] {
                first.check_layout(l)?;
            }
        }
        Ok(Self { learners })
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    /// `count: u32 LE` followed by one FLPV block per learner.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.learners.len() as u32).to_le_bytes().to_vec();
        for l in &self.learners {
            out.extend(l.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(format_err(bytes.len(), "truncated ensemble count"));
        }
        let count = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let mut pos = 4;
        let mut learners = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let (p, used) = ParamVector::read_block(&bytes[pos..], pos)?;
            learners.push(p);
            pos += used;
        }
        if pos != bytes.len() {
            return Err(format_err(pos, "trailing bytes after ensemble"));
        }
        Self::new(learners)
    }
}

/// Trains the ensemble. Learner `k` draws from `rng/learner/k` (or from `rng`
/// itself with `shared_init`).
pub fn train_bagging(
    users: &[UserDataset],
    model_cfg: &ModelConfig,
    cfg: &BaggingConfig,
    rng: &Rng,
) -> Result<Ensemble> {
    if cfg.n_learners == 0 {
        return Err(config("bagging needs at least one learner"));
    }
    let subsets: Vec<Vec<usize>> = if cfg.disable_bootstrap {
        vec![(0..users.len()).collect(); cfg.n_learners]
    } else {
        bootstrap_userwise(users, cfg.n_learners, rng)?
    };
    let central = CentralConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
    };
    let learners = subsets
        .par_iter()
        .enumerate()
        .map(|(k, subset)| {
            let data: Vec<UserDataset> = subset.iter().map(|&u| users[u].clone()).collect();
            let lrng = if cfg.shared_init {
                rng.clone()
            } else {
                rng.child(&path!["learner", k])
            };
            train_centralized(&data, model_cfg, &central, &lrng).map_err(|e| Error::Stage {
                stage: format!("bagging learner {k}"),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(learners)
}

/// Mean positive-class probability over the learners.
pub fn soft_vote(ensemble: &Ensemble, model_cfg: &ModelConfig, sample: &Sample) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(config("soft vote over an empty ensemble"));
    }
    let mut sum = 0.0;
    for l in &ensemble.learners {
        sum += predict(l, model_cfg, sample)?;
    }
    Ok(sum / ensemble.len() as f64)
}
