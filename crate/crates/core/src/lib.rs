//! Federated learning laboratory for remote-learner state detection.
//!
//! A bidirectional-LSTM sequence classifier is trained across simulated
//! learner devices under six aggregation strategies, alongside centralized
//! and bagging baselines, and scored with the usual imbalanced-classification
//! metrics.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evalkit;
pub mod fedcore;
pub mod harness;
pub mod model;
pub mod numkernel;
pub mod optim;

mod io_util;

pub use error::{Error, Result};
pub use io_util::write_atomic;
