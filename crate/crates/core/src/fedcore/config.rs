use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::UserDataset;
use crate::error::{config, Result};
use crate::evalkit::CoreMetrics;
use crate::model::ParamVector;
use crate::optim::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    FedAvg,
    FedAdam,
    FedAws,
    FedProx,
    Moon,
    TurboSvm,
}

impl Algo {
    pub const ALL: [Algo; 6] = [
        Algo::FedAvg,
        Algo::FedAdam,
        Algo::FedAws,
        Algo::FedProx,
        Algo::Moon,
        Algo::TurboSvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::FedAvg => "fedavg",
            Algo::FedAdam => "fedadam",
            Algo::FedAws => "fedaws",
            Algo::FedProx => "fedprox",
            Algo::Moon => "moon",
            Algo::TurboSvm => "turbosvm",
        }
    }

    /// Whether the server applies its own learning rate.
    pub fn uses_server_lr(self) -> bool {
        matches!(self, Algo::FedAdam | Algo::FedAws | Algo::TurboSvm)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| config(format!("unknown algorithm {s:?}")))
    }
}

/// Update rule FedAdam applies to the pseudo-gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerRule {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub algo: Algo,
    pub rounds: usize,
    pub participation: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub client_lr: f64,
    pub server_lr: f64,
    /// Server Adam moments for FedAdam; its `lr` is replaced by `server_lr`.
    pub server_adam: AdamConfig,
    pub server_rule: ServerRule,
    pub mu_prox: f64,
    pub mu_moon: f64,
    pub tau_moon: f64,
    pub aws_margin: f64,
    pub svm_c: f64,
    pub svm_iters: usize,
    /// Rounds without a validation F1 improvement before stopping.
    pub patience: Option<usize>,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            algo: Algo::FedAvg,
            rounds: 100,
            participation: 0.5,
            local_epochs: 8,
            batch_size: 4,
            client_lr: 1e-3,
            server_lr: 1e-2,
            server_adam: AdamConfig::default(),
            server_rule: ServerRule::Adam,
            mu_prox: 0.01,
            mu_moon: 1.0,
            tau_moon: 0.5,
            aws_margin: 1.0,
            svm_c: 1.0,
            svm_iters: 500,
            patience: Some(10),
        }
    }
}

impl FederationConfig {
    pub fn with_algo(mut self, algo: Algo) -> Self {
        self.algo = algo;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(config(format!(
                "participation {} outside (0, 1]",
                self.participation
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(config("local_epochs and batch_size must be at least 1"));
        }
        let coeffs = [
            ("client_lr", self.client_lr),
            ("server_lr", self.server_lr),
            ("mu_prox", self.mu_prox),
            ("mu_moon", self.mu_moon),
            ("aws_margin", self.aws_margin),
            ("svm_c", self.svm_c),
        ];
        for (name, v) in coeffs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.tau_moon > 0.0) {
            return Err(config("tau_moon must be positive"));
        }
        self.server_adam.validate()
    }
}

/// One simulated device.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: String,
    pub dataset: UserDataset,
    /// Model this client returned the last time it took part (MOON).
    pub prev_local: Option<ParamVector>,
}

impl ClientState {
    pub fn new(dataset: UserDataset) -> Self {
        Self {
            id: dataset.user_id.clone(),
            dataset,
            prev_local: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub participants: Vec<String>,
    pub mean_local_loss: f64,
    pub update_norm: f64,
    pub validation: Option<CoreMetrics>,
}

impl RoundReport {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("round report serializes");
        s.push('\n');
        s
    }
}
