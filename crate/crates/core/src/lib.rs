//! Deterministic simulator for federated low-rank adapter (LoRA) fine-tuning
//! under heterogeneous client-side privacy noise.
//!
//! The server never sees the noise levels clients pick. It estimates each
//! client's noise from the uploaded adapters with a leave-one-out PCA residual,
//! turns the estimates into inverse-noise aggregation weights, and merges the
//! weighted sum of adapter products into a frozen backbone. Each client picks
//! its noise level with a UCB bandit over a discrete action set, trading local
//! accuracy against a privacy benefit.
//!
//! Module map:
//! * [`adapters`] adapter pairs, Gaussian perturbation and the aggregation rules
//! * [`noise_est`] leave-one-out PCA noise estimation
//! * [`incentive`] inverse-noise weight allocation
//! * [`policy`] client-side UCB noise adaptation and the client utility
//! * [`task`] synthetic classification task, Dirichlet partitioning, local training
//! * [`orchestrator`] round loop, metrics, sweeps and baselines
//! * [`checks`] self-test property suites used by the `check` subcommand

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapters;
pub mod checks;
pub mod error;
pub mod incentive;
pub mod noise_est;
pub mod orchestrator;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod task;

pub use adapters::{AdapterPair, ClientUpdate, GlobalModel};
pub use error::{Result, SimError};
pub use incentive::WeightVector;
pub use noise_est::{EstimationSource, NoiseEstimates};
pub use orchestrator::{
    Aggregator, RoundRecord, RunSummary, SimConfig, SweepAxis, SweepCell,
};
pub use policy::{ActionSet, PrivacyPreference, UcbState};
pub use task::{Dataset, TaskConfig};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
