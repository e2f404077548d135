//! Pooled-data baselines: centralized training, a bootstrap bagging ensemble
//! with soft voting, and the vote-versus-parameter-averaging toy.

mod bagging;
mod toy;

pub use bagging::{
    bootstrap_userwise, soft_vote, train_bagging, BaggingConfig, Ensemble, DEFAULT_BAGGING_BATCH,
    DEFAULT_LEARNERS,
};
pub use toy::{logit, toy_vote_vs_average, ToyReport};

use serde::{Deserialize, Serialize};

use crate::data::UserDataset;
use crate::error::{config, Result};
use crate::fedcore::{local_train, ClientState, FederationConfig};
use crate::model::{init_params, ModelConfig, ParamVector};
use crate::numkernel::Rng;
use crate::path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CentralConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for CentralConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 8,
            batch_size: 4,
        }
    }
}

/// All samples of `users` as one dataset, in user order.
pub fn pool_users(users: &[UserDataset]) -> UserDataset {
    UserDataset {
        user_id: "pooled".into(),
        samples: users.iter().flat_map(|u| u.samples.iter().cloned()).collect(),
        wears_glasses: false,
    }
}

/// Shuffled mini-batch SGD over the pooled samples, starting from `init`.
/// Shuffling draws from `rng`.
pub fn train_centralized_from(
    users: &[UserDataset],
    init: &ParamVector,
    model_cfg: &ModelConfig,
    cfg: &CentralConfig,
    rng: &mut Rng,
) -> Result<ParamVector> {
    let pooled = pool_users(users);
    if pooled.is_empty() {
        return Err(config("centralized training needs at least one sample"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(config("epochs and batch_size must be at least 1"));
    }
    let fed = FederationConfig {
        client_lr: cfg.lr,
        local_epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        ..FederationConfig::default()
    };
    let mut state = ClientState::new(pooled);
    Ok(local_train(&mut state, init, &fed, model_cfg, rng)?.0)
}

/// Initializes from `rng/init` and trains with shuffles from `rng/shuffle`.
pub fn train_centralized(
    users: &[UserDataset],
    model_cfg: &ModelConfig,
    cfg: &CentralConfig,
    rng: &Rng,
) -> Result<ParamVector> {
    let init = init_params(model_cfg, &mut rng.child(&path!["init"]))?;
    train_centralized_from(users, &init, model_cfg, cfg, &mut rng.child(&path!["shuffle"]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::model::predict;
    use crate::numkernel::Mat;

    fn toy_users() -> Vec<UserDataset> {
        // Two users, each with both classes, separated by sign of the drift.
        (0..2)
            .map(|u| UserDataset {
                user_id: format!("t{u}"),
                samples: (0..6)
                    .map(|k| {
                        let y = (k % 2) as u8;
                        let s = if y == 1 { 1.0 } else { -1.0 };
                        Sample::new(
                            format!("t{u}"),
                            y,
                            Mat::from_fn(4, 3, |t, j| s * (0.3 + 0.1 * t as f64) + 0.05 * (j + u) as f64),
                        )
                    })
                    .collect(),
                wears_glasses: false,
            })
            .collect()
    }

    #[test]
    fn zero_lr_keeps_init() {
        let cfg = ModelConfig::small(4, 3, 3, 1);
        let rng = Rng::derive(0, &path!["central"]);
        let p = train_centralized(&toy_users(), &cfg, &CentralConfig { lr: 0.0, ..Default::default() }, &rng).unwrap();
        let init = init_params(&cfg, &mut rng.child(&path!["init"])).unwrap();
        assert_eq!(p, init);
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let cfg = ModelConfig::small(4, 3, 3, 1);
        let users = toy_users();
        let rng = Rng::derive(1, &path!["central"]);
        let c = CentralConfig { lr: 0.1, epochs: 200, batch_size: 4 };
        let p = train_centralized(&users, &cfg, &c, &rng).unwrap();
        for s in users.iter().flat_map(|u| &u.samples) {
            let prob = predict(&p, &cfg, s).unwrap();
            assert_eq!(u8::from(prob >= 0.5), s.label);
        }
        assert_eq!(p, train_centralized(&users, &cfg, &c, &rng).unwrap());
    }

    #[test]
    fn empty_data_is_rejected() {
        let cfg = ModelConfig::small(4, 3, 3, 1);
        let rng = Rng::derive(1, &path!["central"]);
        assert!(train_centralized(&[], &cfg, &CentralConfig::default(), &rng).is_err());
    }
}
