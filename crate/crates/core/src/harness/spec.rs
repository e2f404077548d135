use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaggingConfig, CentralConfig};
use crate::data::SynthSpec;
use crate::error::{config, Result};
use crate::fedcore::{Algo, FederationConfig};
use crate::model::ModelConfig;

/// A training method: one of the federated algorithms or a pooled baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Federated(Algo),
    Centralized,
    Bagging,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Federated(a) => a.name(),
            Method::Centralized => "centralized",
            Method::Bagging => "bagging",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centralized" => Ok(Method::Centralized),
            "bagging" => Ok(Method::Bagging),
            other => other.parse().map(Method::Federated),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synth {
        #[serde(default)]
        spec: SynthSpec,
        #[serde(default)]
        seed: u64,
    },
    Dir {
        path: PathBuf,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synth {
            spec: SynthSpec::default(),
            seed: 0,
        }
    }
}

/// Half-decade grid `10^-5.5, 10^-5, ..., 10^-1`.
pub fn default_lr_grid() -> Vec<f64> {
    (0..10).map(|k| 10f64.powf(-5.5 + 0.5 * k as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearch {
    pub enabled: bool,
    pub folds: usize,
    /// Round budget per fold run; `None` uses the federation's own.
    pub rounds: Option<usize>,
    pub lr_grid: Vec<f64>,
    pub server_lr_grid: Vec<f64>,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self {
            enabled: true,
            folds: 5,
            rounds: None,
            lr_grid: default_lr_grid(),
            server_lr_grid: default_lr_grid(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub dataset_name: String,
    pub dataset: DatasetSource,
    /// Apply the frame and user exclusion rules after loading.
    pub preprocess: bool,
    pub model: ModelConfig,
    pub methods: Vec<Method>,
    pub federation: FederationConfig,
    pub central: CentralConfig,
    pub bagging: BaggingConfig,
    pub grid: GridSearch,
    pub seeds: Vec<u64>,
    /// Fixed seed for the user split; by default each run seed draws its own.
    pub split_seed: Option<u64>,
    pub test_frac: f64,
    /// Share of training users held back for early stopping in final runs.
    pub validation_frac: f64,
    pub chance_trials: usize,
    /// Where results go. Not part of the digest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset_name: "synthetic".into(),
            dataset: DatasetSource::default(),
            preprocess: true,
            model: ModelConfig::desk(),
            methods: vec![Method::Federated(Algo::FedAvg)],
            federation: FederationConfig::default(),
            central: CentralConfig::default(),
            bagging: BaggingConfig::default(),
            grid: GridSearch::default(),
            seeds: vec![0, 1, 2, 3, 4],
            split_seed: None,
            test_frac: 0.1,
            validation_frac: 0.1,
            chance_trials: crate::evalkit::DEFAULT_CHANCE_TRIALS,
            output_dir: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.lr_grid.is_empty() || self.grid.server_lr_grid.is_empty() {
            return Err(config("learning-rate grids must be nonempty"));
        }
        if self.grid.lr_grid.iter().chain(&self.grid.server_lr_grid).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(config("learning rates must be finite and non-negative"));
        }
        if self.grid.enabled && self.grid.folds < 2 {
            return Err(config("grid search needs at least 2 folds"));
        }
        if self.seeds.is_empty() {
            return Err(config("at least one seed is required"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(config("seeds must be distinct"));
        }
        if self.methods.is_empty() {
            return Err(config("at least one method is required"));
        }
        if !(0.0..1.0).contains(&self.test_frac) || !(0.0..1.0).contains(&self.validation_frac) {
            return Err(config("test_frac and validation_frac must lie in [0, 1)"));
        }
        if self.chance_trials == 0 {
            return Err(config("chance_trials must be positive"));
        }
        self.model.validate()?;
        self.federation.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the canonical JSON (keys sorted, no whitespace),
    /// ignoring `output_dir`.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("spec serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        // serde_json's map is ordered by key, so this text is canonical.
        let text = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
