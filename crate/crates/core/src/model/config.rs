use serde::{Deserialize, Serialize};

use super::params::Layout;
use crate::error::{config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Bilstm,
    Mlp,
}

/// Shape of the classifier.
///
/// `hidden` is the LSTM width of one direction, so the readout is `2 * hidden`
/// wide. For [`Arch::Mlp`] the input is the flattened `seq_len x feat_dim`
/// matrix (the downsampled 12-frame form in the usual setup).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub feat_dim: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub glass_fusion: bool,
    pub glass_dim: usize,
    pub arch: Arch,
    pub mlp_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// 124 frames of 520 features, three bi-LSTM layers of 100 units.
    pub fn full() -> Self {
        Self {
            seq_len: 124,
            feat_dim: 520,
            hidden: 100,
            lstm_layers: 3,
            glass_fusion: false,
            glass_dim: 256,
            arch: Arch::Bilstm,
            mlp_hidden: 100,
        }
    }

    /// Small configuration used by the test suite and desk experiments.
    pub fn desk() -> Self {
        Self {
            seq_len: 12,
            feat_dim: 16,
            hidden: 16,
            lstm_layers: 2,
            glass_fusion: false,
            glass_dim: 8,
            arch: Arch::Bilstm,
            mlp_hidden: 32,
        }
    }

    pub fn small(seq_len: usize, feat_dim: usize, hidden: usize, lstm_layers: usize) -> Self {
        Self {
            seq_len,
            feat_dim,
            hidden,
            lstm_layers,
            glass_fusion: false,
            glass_dim: 0,
            arch: Arch::Bilstm,
            mlp_hidden: hidden,
        }
    }

    pub fn with_glass(mut self, glass_dim: usize) -> Self {
        self.glass_fusion = true;
        self.glass_dim = glass_dim;
        self
    }

    pub fn mlp(mut self, mlp_hidden: usize) -> Self {
        self.arch = Arch::Mlp;
        self.mlp_hidden = mlp_hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.feat_dim == 0 {
            return Err(config("seq_len and feat_dim must be at least 1"));
        }
        match self.arch {
            Arch::Bilstm if self.hidden == 0 || self.lstm_layers == 0 => {
                Err(config("hidden and lstm_layers must be at least 1"))
            }
            Arch::Mlp if self.mlp_hidden == 0 => Err(config("mlp_hidden must be at least 1")),
            _ if self.glass_fusion && self.glass_dim == 0 => {
                Err(config("glass fusion needs glass_dim >= 1"))
            }
            _ if self.glass_fusion && self.seq_len < 2 => {
                Err(config("glass fusion needs seq_len >= 2"))
            }
            _ => Ok(()),
        }
    }

    /// Width of the learned representation fed to the projection.
    pub fn readout_dim(&self) -> usize {
        match self.arch {
            Arch::Bilstm => 2 * self.hidden,
            Arch::Mlp => self.mlp_hidden,
        }
    }

    pub fn glass_summary_dim(&self) -> usize {
        if self.glass_fusion {
            2 * self.glass_dim
        } else {
            0
        }
    }

    pub fn projection_input_dim(&self) -> usize {
        self.readout_dim() + self.glass_summary_dim()
    }

    pub fn lstm_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.feat_dim
        } else {
            2 * self.hidden
        }
    }

    /// Total parameter count, equal to `layout().total()`.
    pub fn param_count(&self) -> usize {
        let body = match self.arch {
            Arch::Bilstm => (0..self.lstm_layers)
                .map(|l| 2 * 4 * self.hidden * (self.lstm_input_dim(l) + self.hidden + 1))
                .sum(),
            Arch::Mlp => self.mlp_hidden * (self.seq_len * self.feat_dim + 1),
        };
        body + 2 * self.projection_input_dim() + 2
    }

    pub fn layout(&self) -> Layout {
        let mut shapes: Vec<(String, usize, usize)> = Vec::new();
        match self.arch {
            Arch::Bilstm => {
                let g = 4 * self.hidden;
                for l in 0..self.lstm_layers {
                    for dir in ["fwd", "bwd"] {
                        shapes.push((w_in_name(l, dir), g, self.lstm_input_dim(l)));
                        shapes.push((w_rec_name(l, dir), g, self.hidden));
                        shapes.push((bias_name(l, dir), g, 1));
                    }
                }
            }
            Arch::Mlp => {
                shapes.push(("mlp.w".into(), self.mlp_hidden, self.seq_len * self.feat_dim));
                shapes.push(("mlp.b".into(), self.mlp_hidden, 1));
            }
        }
        shapes.push((PROJ_W.into(), 2, self.projection_input_dim()));
        shapes.push((PROJ_B.into(), 2, 1));
        Layout::new(shapes)
    }
}

pub const PROJ_W: &str = "proj.w";
pub const PROJ_B: &str = "proj.b";

pub(crate) fn w_in_name(layer: usize, dir: &str) -> String {
    format!("lstm.{layer}.{dir}.w_in")
}

pub(crate) fn w_rec_name(layer: usize, dir: &str) -> String {
    format!("lstm.{layer}.{dir}.w_rec")
}

pub(crate) fn bias_name(layer: usize, dir: &str) -> String {
    format!("lstm.{layer}.{dir}.bias")
}
