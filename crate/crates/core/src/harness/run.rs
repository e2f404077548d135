use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{grid_search_client_lr, grid_search_server_lr, GridResult};
use super::report::write_results_csv;
use super::spec::{DatasetSource, ExperimentSpec, Method};
use crate::baselines::{soft_vote, train_bagging, train_centralized, BaggingConfig, CentralConfig, Ensemble};
use crate::data::{
    downsample_for_mlp, preprocess_users, read_dataset, synth_generate, user_independent_split,
    PreprocessStats, Sample, UserDataset, MLP_FRAMES, MLP_SOURCE_FRAMES,
};
use crate::error::{config, Error, Result};
use crate::evalkit::{aggregate_seeds, evaluate, Metrics, MetricsSummary};
use crate::fedcore::{run_federation, FederationConfig, RoundReport};
use crate::model::{predict, Arch, ModelConfig, ParamVector};
use crate::numkernel::Rng;
use crate::path;
use crate::write_atomic;

pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const GRID_JSON: &str = "grid.json";
pub const TIMINGS_JSON: &str = "timings.json";
pub const SPEC_JSON: &str = "spec.json";

/// Loads the dataset named by `spec`, applies preprocessing when requested
/// and downsamples 124-frame clips for the MLP.
pub fn load_users(spec: &ExperimentSpec) -> Result<(Vec<UserDataset>, Option<PreprocessStats>)> {
    let users = match &spec.dataset {
        DatasetSource::Synth { spec: s, seed } => synth_generate(s, *seed)?,
        DatasetSource::Dir { path } => read_dataset(path)?,
    };
    let (mut users, stats) = if spec.preprocess {
        let (u, s) = preprocess_users(users);
        (u, Some(s))
    } else {
        (users, None)
    };
    if spec.model.arch == Arch::Mlp {
        for s in users.iter_mut().flat_map(|u| u.samples.iter_mut()) {
            if s.seq_len() == MLP_SOURCE_FRAMES {
                downsample_sample(s)?;
            }
        }
    }
    Ok((users, stats))
}

fn downsample_sample(s: &mut Sample) -> Result<()> {
    s.features = downsample_for_mlp(&s.features)?;
    if let Some(g) = &s.glass {
        s.glass = Some(downsample_for_mlp(g)?);
    }
    let block = MLP_SOURCE_FRAMES / MLP_FRAMES;
    s.brightness = s
        .brightness
        .chunks(block)
        .take(MLP_FRAMES)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    s.valid = vec![true; MLP_FRAMES];
    s.fps /= block as f64;
    Ok(())
}

/// Users of one seed: training clients, early-stopping users carved from the
/// training side, and held-out test users.
#[derive(Clone, Debug)]
pub struct SeedSplit {
    pub clients: Vec<UserDataset>,
    pub validation: Vec<UserDataset>,
    pub test: Vec<UserDataset>,
    /// Positive rate over every training-side sample.
    pub train_pos_rate: f64,
}

impl SeedSplit {
    /// Training clients plus the early-stopping users.
    pub fn training_side(&self) -> Vec<UserDataset> {
        self.clients.iter().chain(&self.validation).cloned().collect()
    }
}

pub fn split_for_seed(users: &[UserDataset], spec: &ExperimentSpec, seed: u64) -> Result<SeedSplit> {
    let split_seed = spec.split_seed.unwrap_or(seed);
    let split = user_independent_split(
        users.to_vec(),
        spec.test_frac,
        &mut Rng::derive(split_seed, &path!["split"]),
    )?;
    let train_pos_rate = split.train_positive_rate();
    let mut clients = split.train_clients;
    let n_val = ((spec.validation_frac * clients.len() as f64).round() as usize)
        .min(clients.len().saturating_sub(1));
    let mut validation = Vec::new();
    if n_val > 0 {
        let mut order: Vec<usize> = (0..clients.len()).collect();
        Rng::derive(seed, &path!["validation"]).shuffle(&mut order);
        let mut is_val = vec![false; clients.len()];
        for &i in &order[..n_val] {
            is_val[i] = true;
        }
        let (v, c): (Vec<_>, Vec<_>) = clients.into_iter().zip(is_val).partition(|(_, v)| *v);
        validation = v.into_iter().map(|(u, _)| u).collect();
        clients = c.into_iter().map(|(u, _)| u).collect();
    }
    Ok(SeedSplit {
        clients,
        validation,
        test: split.test_users,
        train_pos_rate,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Global(ParamVector),
    Ensemble(Ensemble),
}

impl TrainedModel {
    pub fn predict(&self, model_cfg: &ModelConfig, sample: &Sample) -> Result<f64> {
        match self {
            TrainedModel::Global(p) => predict(p, model_cfg, sample),
            TrainedModel::Ensemble(e) => soft_vote(e, model_cfg, sample),
        }
    }

    /// FLPV bytes for a single model, the ensemble container otherwise.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            TrainedModel::Global(p) => p.to_bytes(),
            TrainedModel::Ensemble(e) => e.to_bytes(),
        }
    }

    pub fn file_extension(&self) -> &'static str {
        match self {
            TrainedModel::Global(_) => "flpv",
            TrainedModel::Ensemble(_) => "ens",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: TrainedModel,
    pub reports: Vec<RoundReport>,
    pub best_round: Option<usize>,
}

/// Learning rates one method is trained with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub client_lr: f64,
    pub server_lr: Option<f64>,
}

/// Trains `method` once. Federated methods stop early on `split.validation`;
/// the pooled baselines train on the clients for a fixed number of epochs.
pub fn train_method(
    spec: &ExperimentSpec,
    method: Method,
    split: &SeedSplit,
    rates: Rates,
    seed: u64,
) -> Result<Trained> {
    match method {
        Method::Federated(algo) => {
            let fed = FederationConfig {
                client_lr: rates.client_lr,
                server_lr: rates.server_lr.unwrap_or(spec.federation.server_lr),
                ..spec.federation.clone().with_algo(algo)
            };
            let out = run_federation(&fed, &split.clients, &split.validation, &spec.model, seed)?;
            Ok(Trained {
                model: TrainedModel::Global(out.params),
                reports: out.reports,
                best_round: out.best_round,
            })
        }
        Method::Centralized => {
            let cfg = CentralConfig {
                lr: rates.client_lr,
                ..spec.central
            };
            let rng = Rng::derive(seed, &path!["centralized"]);
            let p = train_centralized(&split.clients, &spec.model, &cfg, &rng)?;
            Ok(Trained {
                model: TrainedModel::Global(p),
                reports: Vec::new(),
                best_round: None,
            })
        }
        Method::Bagging => {
            let cfg = BaggingConfig {
                lr: rates.client_lr,
                ..spec.bagging
            };
            let rng = Rng::derive(seed, &path!["bagging"]);
            let e = train_bagging(&split.clients, &spec.model, &cfg, &rng)?;
            Ok(Trained {
                model: TrainedModel::Ensemble(e),
                reports: Vec::new(),
                best_round: None,
            })
        }
    }
}

/// Scores `model` on every test sample.
pub fn evaluate_model(
    spec: &ExperimentSpec,
    model: &TrainedModel,
    split: &SeedSplit,
    method: Method,
    seed: u64,
) -> Result<Metrics> {
    let samples: Vec<&Sample> = split.test.iter().flat_map(|u| &u.samples).collect();
    if samples.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let probs = samples
        .par_iter()
        .map(|s| model.predict(&spec.model, s))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let mut rng = Rng::derive(seed, &path!["chance", method.name()]);
    evaluate(&probs, &labels, 0.5, split.train_pos_rate, spec.chance_trials, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub spec_digest: String,
    pub seed: u64,
    pub method: Method,
    pub dataset: String,
    pub client_lr: f64,
    pub server_lr: Option<f64>,
    pub metrics: Metrics,
    pub rounds_run: usize,
    pub best_round: Option<usize>,
}

/// A stage that failed for one seed and method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub method: Method,
    pub stage: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub seed: u64,
    pub client: Option<GridResult>,
    pub server: BTreeMap<Method, GridResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seed: u64,
    pub method: Method,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub spec_digest: String,
    pub dataset: String,
    pub records: Vec<ResultRecord>,
    pub failures: Vec<RunFailure>,
    /// Cross-seed statistics per method with at least one record.
    pub summary: BTreeMap<Method, MetricsSummary>,
    #[serde(skip)]
    pub grid: Vec<SeedGrid>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
    #[serde(skip)]
    pub preprocess: Option<PreprocessStats>,
}

impl ExperimentOutcome {
    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &ResultRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    fn summarize(&mut self) -> Result<()> {
        let mut by_method: BTreeMap<Method, Vec<Metrics>> = BTreeMap::new();
        for r in &self.records {
            by_method.entry(r.method).or_default().push(r.metrics.clone());
        }
        self.summary = by_method
            .into_iter()
            .map(|(m, v)| aggregate_seeds(&v).map(|s| (m, s)))
            .collect::<Result<_>>()?;
        Ok(())
    }
}

fn fail(seed: u64, method: Method, stage: &str, e: &Error) -> RunFailure {
    RunFailure {
        seed,
        method,
        stage: stage.to_string(),
        error: e.to_string(),
    }
}

fn file_stem(method: Method, seed: u64) -> String {
    format!("{}_seed{seed}", method.name())
}

/// The full protocol: for every seed, split users, grid-search learning
/// rates, train each method and score it on the held-out users. Failures
/// are recorded with their stage and the remaining runs continue. With an
/// output directory, results are rewritten after every seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let (users, pre) = load_users(spec).map_err(|e| Error::Stage {
        stage: "load".into(),
        source: Box::new(e),
    })?;
    let out_dir = spec.output_dir.as_deref();
    if let Some(dir) = out_dir {
        write_spec(spec, dir)?;
    }
    let mut outcome = ExperimentOutcome {
        spec_digest: spec.digest(),
        dataset: spec.dataset_name.clone(),
        preprocess: pre,
        ..Default::default()
    };

    for &seed in &spec.seeds {
        let mut grid = SeedGrid {
            seed,
            client: None,
            server: BTreeMap::new(),
        };
        let split = match split_for_seed(&users, spec, seed) {
            Ok(s) => s,
            Err(e) => {
                outcome.failures.extend(spec.methods.iter().map(|&m| fail(seed, m, "split", &e)));
                continue;
            }
        };
        let client_lr = if spec.grid.enabled {
            match grid_search_client_lr(spec, &split.training_side(), seed) {
                Ok(g) => {
                    let lr = g.chosen;
                    grid.client = Some(g);
                    lr
                }
                Err(e) => {
                    outcome.failures.extend(spec.methods.iter().map(|&m| fail(seed, m, "grid", &e)));
                    outcome.grid.push(grid);
                    continue;
                }
            }
        } else {
            spec.federation.client_lr
        };

        for &method in &spec.methods {
            let started = Instant::now();
            let server_lr = match method {
                Method::Federated(a) if a.uses_server_lr() => {
                    if spec.grid.enabled {
                        match grid_search_server_lr(spec, &split.training_side(), a, client_lr, seed) {
                            Ok(g) => {
                                let lr = g.chosen;
                                grid.server.insert(method, g);
                                Some(lr)
                            }
                            Err(e) => {
                                outcome.failures.push(fail(seed, method, "server grid", &e));
                                continue;
                            }
                        }
                    } else {
                        Some(spec.federation.server_lr)
                    }
                }
                _ => None,
            };
            let rates = Rates { client_lr, server_lr };
            let trained = match train_method(spec, method, &split, rates, seed) {
                Ok(t) => t,
                Err(e) => {
                    outcome.failures.push(fail(seed, method, "train", &e));
                    continue;
                }
            };
            let metrics = match evaluate_model(spec, &trained.model, &split, method, seed) {
                Ok(m) => m,
                Err(e) => {
                    outcome.failures.push(fail(seed, method, "evaluate", &e));
                    continue;
                }
            };
            if let Some(dir) = out_dir {
                let stem = file_stem(method, seed);
                if !trained.reports.is_empty() {
                    let log: String = trained.reports.iter().map(RoundReport::to_json_line).collect();
                    write_atomic(&dir.join("rounds").join(format!("{stem}.jsonl")), log.as_bytes())?;
                }
                write_atomic(
                    &dir.join("models").join(format!("{stem}.{}", trained.model.file_extension())),
                    &trained.model.to_bytes(),
                )?;
            }
            outcome.records.push(ResultRecord {
                spec_digest: outcome.spec_digest.clone(),
                seed,
                method,
                dataset: spec.dataset_name.clone(),
                client_lr,
                server_lr,
                metrics,
                rounds_run: trained.reports.len(),
                best_round: trained.best_round,
            });
            outcome.timings.push(Timing {
                seed,
                method,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
        outcome.grid.push(grid);
        outcome.summarize()?;
        if let Some(dir) = out_dir {
            write_outputs(&outcome, dir)?;
        }
    }
    outcome.summarize()?;
    if let Some(dir) = out_dir {
        write_outputs(&outcome, dir)?;
    }
    Ok(outcome)
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the spec without its output directory, so reruns elsewhere match.
pub fn write_spec(spec: &ExperimentSpec, dir: &Path) -> Result<()> {
    let spec = ExperimentSpec {
        output_dir: None,
        ..spec.clone()
    };
    write_atomic(&dir.join(SPEC_JSON), &to_json(&spec)?)
}

pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(RESULTS_JSON), &to_json(outcome)?)?;
    write_results_csv(&outcome.records, &dir.join(RESULTS_CSV))?;
    write_atomic(&dir.join(GRID_JSON), &to_json(&outcome.grid)?)?;
    write_atomic(&dir.join(TIMINGS_JSON), &to_json(&outcome.timings)?)?;
    if let Some(p) = &outcome.preprocess {
        write_atomic(&dir.join("preprocess.json"), &to_json(p)?)?;
    }
    Ok(())
}

/// Reads the outcome previously written to `dir`.
pub fn read_outcome(dir: &Path) -> Result<ExperimentOutcome> {
    let text = std::fs::read_to_string(dir.join(RESULTS_JSON))?;
    let outcome: ExperimentOutcome = serde_json::from_str(&text)?;
    if outcome.records.iter().any(|r| r.spec_digest != outcome.spec_digest) {
        return Err(config("records in results.json carry different spec digests"));
    }
    Ok(outcome)
}
