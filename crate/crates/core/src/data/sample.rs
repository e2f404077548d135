use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::numkernel::Mat;

/// One labeled clip: a `T x F` feature sequence plus per-frame face
/// validity and mean gray level.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub user_id: String,
    /// 1 = mind wandering / disengaged / bored.
    pub label: u8,
    pub features: Mat,
    pub glass: Option<Mat>,
    pub valid: Vec<bool>,
    /// Mean gray value per frame on the 0-255 scale.
    pub brightness: Vec<f64>,
    pub fps: f64,
}

impl Sample {
    /// All frames valid, brightness 128, 12.5 fps.
    pub fn new(user_id: impl Into<String>, label: u8, features: Mat) -> Self {
        let t = features.rows();
        Self {
            user_id: user_id.into(),
            label,
            features,
            glass: None,
            valid: vec![true; t],
            brightness: vec![128.0; t],
            fps: 12.5,
        }
    }

    pub fn seq_len(&self) -> usize {
        self.features.rows()
    }

    pub fn label_index(&self) -> usize {
        usize::from(self.label)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.seq_len();
        if self.valid.len() != t || self.brightness.len() != t {
            return Err(shape(format!(
                "channel lengths ({}, {}) differ from T = {t}",
                self.valid.len(),
                self.brightness.len()
            )));
        }
        if let Some(g) = &self.glass {
            if g.rows() != t {
                return Err(shape("glass matrix rows differ from T"));
            }
        }
        if self.label > 1 {
            return Err(shape(format!("label must be 0 or 1, got {}", self.label)));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(shape(format!("fps must be positive, got {}", self.fps)));
        }
        if self
            .brightness
            .iter()
            .any(|b| !(0.0..=255.0).contains(b))
        {
            return Err(shape("brightness outside [0, 255]"));
        }
        Ok(())
    }
}

/// All samples of one learner; one federated client.
#[derive(Clone, Debug, PartialEq)]
pub struct UserDataset {
    pub user_id: String,
    pub samples: Vec<Sample>,
    pub wears_glasses: bool,
}

impl UserDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            if s.user_id != self.user_id {
                return Err(shape(format!(
                    "sample of user `{}` stored under `{}`",
                    s.user_id, self.user_id
                )));
            }
            s.validate()?;
        }
        Ok(())
    }
}

/// Users held out for testing never appear among the training clients.
#[derive(Clone, Debug, PartialEq)]
pub struct FederatedSplit {
    pub train_clients: Vec<UserDataset>,
    pub test_users: Vec<UserDataset>,
}

impl FederatedSplit {
    pub fn n_clients(&self) -> usize {
        self.train_clients.len()
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &Sample> {
        self.train_clients.iter().flat_map(|u| &u.samples)
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &Sample> {
        self.test_users.iter().flat_map(|u| &u.samples)
    }

    pub fn train_positive_rate(&self) -> f64 {
        let (n, p) = self
            .train_samples()
            .fold((0usize, 0usize), |(n, p), s| (n + 1, p + usize::from(s.label)));
        if n == 0 {
            0.0
        } else {
            p as f64 / n as f64
        }
    }
}

/// Entry in a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestUser {
    pub user_id: String,
    pub wears_glasses: bool,
}
