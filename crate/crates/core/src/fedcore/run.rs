use rayon::prelude::*;

use super::aggregate::{
    aggregate_fedadam, aggregate_fedavg, aggregation_weights, server_fedaws_spreadout,
    ServerOptimizer,
};
use super::client::local_train;
use super::config::{Algo, ClientState, FederationConfig, RoundReport, ServerRule};
use super::turbosvm::aggregate_turbosvm;
use crate::data::{Sample, UserDataset};
use crate::error::{config, Error, Result};
use crate::evalkit::{confusion, core_metrics, CoreMetrics};
use crate::model::{init_params, predict, ModelConfig, ParamVector};
use crate::numkernel::Rng;
use crate::optim::{AdamConfig, AdamState, SgdConfig};
use crate::path;

/// `ceil(participation * n)`, at least one.
pub fn participant_count(n_clients: usize, participation: f64) -> usize {
    // The slack keeps products such as 0.1 * 30 from rounding up.
    let raw = (participation * n_clients as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n_clients)
}

/// Distinct client indices for one round, in ascending order.
pub fn sample_clients(n_clients: usize, participation: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(participation > 0.0 && participation <= 1.0) {
        return Err(config(format!("participation {participation} outside (0, 1]")));
    }
    let k = participant_count(n_clients, participation);
    let mut order: Vec<usize> = (0..n_clients).collect();
    rng.shuffle(&mut order);
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

pub fn round_rng(seed: u64, round: usize) -> Rng {
    Rng::derive(seed, &path!["round", round])
}

pub fn client_rng(seed: u64, round: usize, client_id: &str) -> Rng {
    Rng::derive(seed, &path!["round", round, "client", client_id])
}

pub fn init_rng(seed: u64) -> Rng {
    Rng::derive(seed, &path!["init"])
}

/// Positive-class metrics of `params` on every sample of `users`.
pub fn validate_on(
    params: &ParamVector,
    model_cfg: &ModelConfig,
    users: &[UserDataset],
) -> Result<CoreMetrics> {
    let samples: Vec<&Sample> = users.iter().flat_map(|u| &u.samples).collect();
    let probs = samples
        .par_iter()
        .map(|s| predict(params, model_cfg, s))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    core_metrics(&confusion(&probs, &labels, 0.5)?)
}

#[derive(Clone, Debug)]
pub struct FederationOutcome {
    /// Best model by validation F1, or the last one without validation users.
    pub params: ParamVector,
    pub reports: Vec<RoundReport>,
    pub best_round: Option<usize>,
}

fn server_optimizer(cfg: &FederationConfig, like: &ParamVector) -> Result<Option<ServerOptimizer>> {
    if cfg.algo != Algo::FedAdam {
        return Ok(None);
    }
    Ok(Some(match cfg.server_rule {
        ServerRule::Adam => {
            let adam = AdamConfig {
                lr: cfg.server_lr,
                ..cfg.server_adam
            };
            ServerOptimizer::Adam(AdamState::new(adam, like)?)
        }
        ServerRule::Sgd => ServerOptimizer::Sgd(SgdConfig::new(cfg.server_lr)?),
    }))
}

/// Runs the federation from a fresh initialization derived from `seed`.
pub fn run_federation(
    cfg: &FederationConfig,
    clients: &[UserDataset],
    validation: &[UserDataset],
    model_cfg: &ModelConfig,
    seed: u64,
) -> Result<FederationOutcome> {
    let init = init_params(model_cfg, &mut init_rng(seed))?;
    run_federation_from(cfg, clients, validation, model_cfg, seed, init, |_| {})
}

/// As [`run_federation`], starting from `init` and calling `on_round` after
/// each round.
pub fn run_federation_from(
    cfg: &FederationConfig,
    clients: &[UserDataset],
    validation: &[UserDataset],
    model_cfg: &ModelConfig,
    seed: u64,
    init: ParamVector,
    mut on_round: impl FnMut(&RoundReport),
) -> Result<FederationOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if clients.is_empty() {
        return Err(config("federation needs at least one client"));
    }
    if let Some(c) = clients.iter().find(|c| c.is_empty()) {
        return Err(Error::Protocol(format!("client {} has no samples", c.user_id)));
    }
    if init.len() != model_cfg.param_count() {
        return Err(Error::Shape("initial parameters do not match the model".into()));
    }
    let mut states: Vec<ClientState> = clients.iter().cloned().map(ClientState::new).collect();
    let mut global = init;
    let mut server = server_optimizer(cfg, &global)?;
    let mut reports = Vec::with_capacity(cfg.rounds);
    let mut best: Option<(f64, usize, ParamVector)> = None;

    for round in 0..cfg.rounds {
        let picked = sample_clients(states.len(), cfg.participation, &mut round_rng(seed, round))?;
        let mut chosen: Vec<&mut ClientState> = Vec::with_capacity(picked.len());
        let mut next = picked.iter().peekable();
        for (i, st) in states.iter_mut().enumerate() {
            if next.peek() == Some(&&i) {
                chosen.push(st);
                next.next();
            }
        }
        let results: Vec<(ParamVector, f64)> = chosen
            .par_iter_mut()
            .map(|st| {
                let mut rng = client_rng(seed, round, &st.id);
                local_train(st, &global, cfg, model_cfg, &mut rng).map_err(|e| Error::Stage {
                    stage: format!("round {round}, client {}", st.id),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        let ids: Vec<String> = chosen.iter().map(|s| s.id.clone()).collect();
        let sizes: Vec<usize> = chosen.iter().map(|s| s.dataset.len()).collect();
        drop(chosen);

        let weights = aggregation_weights(&sizes)?;
        let locals: Vec<&ParamVector> = results.iter().map(|(p, _)| p).collect();
        let new_global = match cfg.algo {
            Algo::FedAvg | Algo::FedProx | Algo::Moon => aggregate_fedavg(&locals, &weights)?,
            Algo::FedAdam => aggregate_fedadam(
                server.as_mut().expect("server optimizer for fedadam"),
                &global,
                &locals,
                &weights,
            )?,
            Algo::FedAws => {
                let avg = aggregate_fedavg(&locals, &weights)?;
                let mut rng = Rng::derive(seed, &path!["fedaws", round]);
                server_fedaws_spreadout(&avg, cfg.aws_margin, cfg.server_lr, &mut rng)?
            }
            Algo::TurboSvm => {
                if locals.len() < 2 {
                    aggregate_fedavg(&locals, &weights)?
                } else {
                    aggregate_turbosvm(&locals, &weights, cfg.svm_c, cfg.svm_iters, cfg.server_lr)?
                }
            }
        };
        if !new_global.is_finite() {
            return Err(Error::Numeric(format!("global model diverged in round {round}")));
        }
        let update_norm = new_global.sub(&global)?.norm();
        global = new_global;

        let validation_metrics = if validation.is_empty() {
            None
        } else {
            Some(validate_on(&global, model_cfg, validation)?)
        };
        let report = RoundReport {
            round,
            participants: ids,
            mean_local_loss: results.iter().map(|(_, l)| l).sum::<f64>() / results.len() as f64,
            update_norm,
            validation: validation_metrics,
        };
        on_round(&report);
        reports.push(report);

        if let Some(m) = validation_metrics {
            if best.as_ref().is_none_or(|(f1, _, _)| m.f1 > *f1) {
                best = Some((m.f1, round, global.clone()));
            }
            let (_, best_round, _) = best.as_ref().expect("best set above");
            if cfg.patience.is_some_and(|p| round - best_round >= p) {
                break;
            }
        }
    }
    Ok(match best {
        Some((_, round, params)) => FederationOutcome {
            params,
            reports,
            best_round: Some(round),
        },
        None => FederationOutcome {
            params: global,
            reports,
            best_round: None,
        },
    })
}
