//! Federated rounds over simulated learner devices and the server-side
//! aggregation strategies.

mod aggregate;
mod client;
mod config;
mod run;
mod turbosvm;

pub use aggregate::{
    aggregate_fedadam, aggregate_fedavg, aggregation_weights, server_fedaws_spreadout,
    ServerOptimizer,
};
pub use client::{local_train, moon_contrastive};
pub use config::{Algo, ClientState, FederationConfig, RoundReport, ServerRule};
pub use run::{
    client_rng, init_rng, participant_count, round_rng, run_federation, run_federation_from,
    sample_clients, validate_on, FederationOutcome,
};
pub use turbosvm::{aggregate_turbosvm, fit_linear_svm, SvmFit};
