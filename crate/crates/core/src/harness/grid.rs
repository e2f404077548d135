use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use crate::data::{kfold_user_folds, UserDataset};
use crate::error::{config, Error, Result};
use crate::fedcore::{run_federation, validate_on, Algo, FederationConfig};
use crate::numkernel::Rng;
use crate::path;

/// Mean validation F1 of one grid point, `None` when training diverged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub chosen: f64,
    pub points: Vec<GridPoint>,
}

/// First grid point with the highest score. With no finite score the first
/// point is returned.
pub fn pick_best(points: &[GridPoint]) -> Result<f64> {
    let first = points.first().ok_or_else(|| config("learning-rate grid is empty"))?;
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        if let Some(s) = p.score {
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, p.lr));
            }
        }
    }
    Ok(best.map_or(first.lr, |(_, lr)| lr))
}

/// Mean F1 over user folds: each fold is scored by a federation trained on
/// the other folds. Only `clients` are touched.
pub fn cross_validate(
    fed: &FederationConfig,
    spec: &ExperimentSpec,
    clients: &[UserDataset],
    folds: &[Vec<usize>],
    seed: u64,
) -> Result<Option<f64>> {
    let scores = folds
        .par_iter()
        .enumerate()
        .map(|(k, held)| {
            let train: Vec<UserDataset> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.iter().map(|&i| clients[i].clone()))
                .collect();
            let val: Vec<UserDataset> = held.iter().map(|&i| clients[i].clone()).collect();
            match run_federation(fed, &train, &[], &spec.model, seed) {
                Ok(out) => validate_on(&out.params, &spec.model, &val).map(|m| Some(m.f1)),
                Err(Error::Numeric(_)) => Ok(None),
                Err(Error::Stage { source, .. }) if matches!(*source, Error::Numeric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let finite: Option<Vec<f64>> = scores.into_iter().collect();
    Ok(finite.map(|s| s.iter().sum::<f64>() / s.len() as f64))
}

fn search(
    spec: &ExperimentSpec,
    clients: &[UserDataset],
    seed: u64,
    grid: &[f64],
    make: impl Fn(f64) -> FederationConfig + Sync,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(config("learning-rate grid is empty"));
    }
    if grid.len() == 1 {
        return Ok(GridResult {
            chosen: grid[0],
            points: vec![GridPoint { lr: grid[0], score: None }],
        });
    }
    let folds = kfold_user_folds(
        clients.len(),
        spec.grid.folds,
        &mut Rng::derive(seed, &path!["grid", "folds"]),
    )?;
    let points = grid
        .par_iter()
        .map(|&lr| {
            cross_validate(&make(lr), spec, clients, &folds, seed).map(|score| GridPoint { lr, score })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult {
        chosen: pick_best(&points)?,
        points,
    })
}

fn budgeted(spec: &ExperimentSpec, algo: Algo) -> FederationConfig {
    let mut fed = spec.federation.clone().with_algo(algo);
    if let Some(r) = spec.grid.rounds {
        fed.rounds = r;
    }
    fed.patience = None;
    fed
}

/// Client learning rate chosen under FedAvg by user-fold cross-validation.
pub fn grid_search_client_lr(
    spec: &ExperimentSpec,
    clients: &[UserDataset],
    seed: u64,
) -> Result<GridResult> {
    let base = budgeted(spec, Algo::FedAvg);
    search(spec, clients, seed, &spec.grid.lr_grid, |lr| FederationConfig {
        client_lr: lr,
        ..base.clone()
    })
}

/// Server learning rate for `algo` with the client rate held at `client_lr`.
pub fn grid_search_server_lr(
    spec: &ExperimentSpec,
    clients: &[UserDataset],
    algo: Algo,
    client_lr: f64,
    seed: u64,
) -> Result<GridResult> {
    if !algo.uses_server_lr() {
        return Err(config(format!("{algo} has no server learning rate")));
    }
    let base = budgeted(spec, algo);
    search(spec, clients, seed, &spec.grid.server_lr_grid, |lr| FederationConfig {
        client_lr,
        server_lr: lr,
        ..base.clone()
    })
}
