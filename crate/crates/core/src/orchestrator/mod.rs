//! The federated round loop and its metrics.
//!
//! One round, in order: every client draws a fresh shard and trains a new
//! adapter against the current global model; picks a noise level (UCB or
//! fixed); perturbs and uploads. The server estimates noise, allocates
//! weights, aggregates and merges. Then the global model is evaluated on the
//! held-out test set and on each client's shard, and each client feeds its
//! utility back into its bandit.
//!
//! Client-side work runs in parallel; every client consumes only its own
//! `(seed, kind, client, round)` streams, so results do not depend on
//! scheduling.

mod config;
mod sweep;

pub use config::{ActionSetSpec, Aggregator, SimConfig, HETEROGENEOUS_PROFILE};
pub use sweep::{run_sweep, SweepAxis, SweepCell, SWEEP_SEED_STRIDE};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{
    aggregate_avg_separate, aggregate_stacked, perturb_adapter, AdapterPair, ClientUpdate, GlobalModel,
};
use crate::error::Result;
#[cfg(test)]
use crate::error::SimError;
use crate::incentive::{nwa_weights, WeightVector};
use crate::noise_est::{apply_estimation_bias, estimate_loo_pca};
use crate::policy::{client_utility, sample_preferences, ucb_select, ucb_update, ActionSet, UcbState};
use crate::rng::{stream, StreamKind};
use crate::stats::mean;
use crate::task::{dirichlet_partition, evaluate, local_train, Dataset, GaussianMixture, Split};
use crate::Matrix;

/// Rounds without any action change required to call the strategy profile stable.
pub const STABILIZATION_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub client_id: usize,
    /// Index into the action set, `None` in fixed-noise mode.
    pub action: Option<usize>,
    pub level: f64,
    /// Injected noise std, `level * sigma_max`.
    pub true_std: f64,
    /// Server-side estimate, present for noise-aware aggregation only.
    pub sigma_hat: Option<f64>,
    pub weight: f64,
    pub local_accuracy: f64,
    pub utility: f64,
    /// Bandit estimates after this round's update.
    pub mu_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub global_accuracy: f64,
    pub clients: Vec<ClientRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Mean global accuracy over rounds.
    pub a_g: f64,
    /// Mean client utility over rounds and clients.
    pub u_l_bar: f64,
    /// Mean local accuracy over rounds and clients.
    pub a_l_bar: f64,
    /// Mean normalized noise level over rounds and clients.
    pub n_bar: f64,
    /// First round opening a window of [`STABILIZATION_WINDOW`] rounds with no action change.
    pub stabilization_round: Option<u32>,
    pub final_global_accuracy: f64,
    pub gammas: Vec<f64>,
    pub records: Vec<RoundRecord>,
}

impl RunSummary {
    pub fn from_records(records: Vec<RoundRecord>, gammas: Vec<f64>) -> Self {
        let a_g = mean(&records.iter().map(|r| r.global_accuracy).collect::<Vec<_>>());
        let per_client = |f: fn(&ClientRecord) -> f64| {
            mean(&records.iter().flat_map(|r| r.clients.iter().map(f)).collect::<Vec<_>>())
        };
        Self {
            a_g,
            u_l_bar: per_client(|c| c.utility),
            a_l_bar: per_client(|c| c.local_accuracy),
            n_bar: per_client(|c| c.level),
            stabilization_round: stabilization_round(&records, STABILIZATION_WINDOW),
            final_global_accuracy: records.last().map_or(f64::NAN, |r| r.global_accuracy),
            gammas,
            records,
        }
    }
}

/// First round `t` such that no client changes its level within `[t, t + window - 1]`.
pub fn stabilization_round(records: &[RoundRecord], window: usize) -> Option<u32> {
    if window == 0 || records.len() < window {
        return None;
    }
    (0..=records.len() - window).find_map(|start| {
        let slice = &records[start..start + window];
        let stable = (0..slice[0].clients.len())
            .all(|c| slice.iter().all(|r| r.clients[c].level == slice[0].clients[c].level));
        stable.then_some(slice[0].round)
    })
}

/// Everything that persists across rounds.
#[derive(Debug, Clone)]
pub struct SimState {
    pub model: GlobalModel,
    pub actions: ActionSet,
    pub policies: Vec<UcbState>,
    pub gammas: Vec<f64>,
    pub proportions: Vec<Vec<f64>>,
    pub mixture: GaussianMixture,
    pub test_set: Dataset,
    /// Last completed round; the next round is `round + 1`.
    pub round: u32,
}

fn client_proportions(cfg: &SimConfig, mixture: &GaussianMixture, round: u32) -> Result<Vec<Vec<f64>>> {
    let task = &cfg.task;
    let pool_size = cfg.n_clients * task.n_per_client;
    let mut rng = stream(cfg.seed, StreamKind::Partition, 0, round);
    let pool = mixture.sample_balanced(pool_size, Split::Train, &mut rng);
    let shards = dirichlet_partition(&pool, cfg.n_clients, cfg.alpha_dir, task.batch_size, &mut rng)?;
    Ok(shards.iter().map(Dataset::class_proportions).collect())
}

impl SimState {
    pub fn init(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let task = &cfg.task;
        let mixture = GaussianMixture::new(task.d_in, task.n_classes, task.class_separation)?;
        let base = if task.base_std > 0.0 {
            let normal = Normal::new(0.0, task.base_std).expect("validated std");
            let mut rng = stream(cfg.seed, StreamKind::Base, 0, 0);
            Matrix::from_fn(task.d_out(), task.d_in, |_, _| normal.sample(&mut rng))
        } else {
            Matrix::zeros(task.d_out(), task.d_in)
        };
        let test_set = mixture.sample_balanced(
            task.test_size,
            Split::Test,
            &mut stream(cfg.seed, StreamKind::TestSet, 0, 0),
        );
        let proportions = client_proportions(cfg, &mixture, 0)?;
        let gammas = sample_preferences(
            cfg.n_clients,
            cfg.gamma_mu,
            cfg.gamma_std,
            &mut stream(cfg.seed, StreamKind::Preference, 0, 0),
        )?
        .into_iter()
        .map(|p| p.gamma)
        .collect();
        let actions = cfg.action_set.resolve()?;
        let policies = vec![UcbState::new(actions.len(), cfg.mu_0); cfg.n_clients];
        Ok(Self {
            model: GlobalModel::new(base)?,
            actions,
            policies,
            gammas,
            proportions,
            mixture,
            test_set,
            round: 0,
        })
    }
}

/// Draws client `i`'s shard for round `t` and trains an adapter on it.
fn train_client(
    cfg: &SimConfig,
    model: &GlobalModel,
    mixture: &GaussianMixture,
    proportions: &[f64],
    client: usize,
    round: u32,
) -> Result<(Dataset, AdapterPair)> {
    let id = client as u32;
    let shard = mixture.sample_with_proportions(
        cfg.task.n_per_client,
        proportions,
        Split::Train,
        &mut stream(cfg.seed, StreamKind::ClientData, id, round),
    )?;
    let adapter = local_train(model, &shard, &cfg.task, &mut stream(cfg.seed, StreamKind::ClientTrain, id, round))?;
    Ok((shard, adapter))
}

fn perturb_client(cfg: &SimConfig, adapter: &AdapterPair, level: f64, client: usize, round: u32) -> Result<AdapterPair> {
    perturb_adapter(
        adapter,
        level,
        cfg.sigma_max,
        &mut stream(cfg.seed, StreamKind::ClientNoise, client as u32, round),
    )
}

/// Server side of a round. Sees only the uploaded matrices.
fn server_aggregate(
    cfg: &SimConfig,
    uploads: &[&AdapterPair],
) -> Result<(Matrix, WeightVector, Option<Vec<f64>>)> {
    match cfg.aggregator {
        Aggregator::Winflora => {
            let mut est = estimate_loo_pca(uploads, cfg.estimation_source)?;
            if cfg.bias_rho != 1.0 {
                est = apply_estimation_bias(&est, cfg.bias_rho)?;
            }
            let w = nwa_weights(&est, cfg.tau)?;
            let delta = aggregate_stacked(uploads, &w)?;
            Ok((delta, w, Some(est.sigma_hat().to_vec())))
        }
        Aggregator::FloraUniform => {
            let w = WeightVector::uniform(uploads.len());
            Ok((aggregate_stacked(uploads, &w)?, w, None))
        }
        Aggregator::FeditAvg => {
            Ok((aggregate_avg_separate(uploads)?, WeightVector::uniform(uploads.len()), None))
        }
    }
}

/// Runs the next round and commits it to `state` only if every step succeeds.
pub fn run_round(state: &mut SimState, cfg: &SimConfig) -> Result<RoundRecord> {
    let t = state.round + 1;
    let proportions = if cfg.task.fresh_proportions && t > 1 {
        client_proportions(cfg, &state.mixture, t)?
    } else {
        state.proportions.clone()
    };

    let choices: Vec<(Option<usize>, f64)> = (0..cfg.n_clients)
        .map(|i| {
            if cfg.ina_enabled {
                let k = ucb_select(&state.policies[i], &state.actions, cfg.kappa, t as u64);
                (Some(k), state.actions.level(k))
            } else {
                (None, cfg.fixed_level(i))
            }
        })
        .collect();

    let client_side: Vec<(Dataset, ClientUpdate)> = (0..cfg.n_clients)
        .into_par_iter()
        .map(|i| {
            let (shard, adapter) = train_client(cfg, &state.model, &state.mixture, &proportions[i], i, t)?;
            let level = choices[i].1;
            let noisy = perturb_client(cfg, &adapter, level, i, t)?;
            Ok((shard, ClientUpdate::new(i, t, noisy, level)?))
        })
        .collect::<Result<_>>()?;

    let uploads: Vec<&AdapterPair> = client_side.iter().map(|(_, u)| u.adapter()).collect();
    let (delta, weights, sigma_hat) = server_aggregate(cfg, &uploads)?;
    let model = state.model.merged(&(delta * cfg.task.scale()))?;

    let global_accuracy = evaluate(&model, &state.test_set);
    let local: Vec<f64> = client_side.par_iter().map(|(shard, _)| evaluate(&model, shard)).collect();

    let mut policies = state.policies.clone();
    let mut clients = Vec::with_capacity(cfg.n_clients);
    for (i, (_, update)) in client_side.iter().enumerate() {
        let level = update.true_noise_level();
        let utility = client_utility(local[i], level, state.gammas[i]);
        if let (true, Some(k)) = (cfg.ina_enabled, choices[i].0) {
            ucb_update(&mut policies[i], k, utility, cfg.beta);
        }
        clients.push(ClientRecord {
            client_id: i,
            action: choices[i].0,
            level,
            true_std: level * cfg.sigma_max,
            sigma_hat: sigma_hat.as_ref().map(|s| s[i]),
            weight: weights.as_slice()[i],
            local_accuracy: local[i],
            utility,
            mu_hat: policies[i].mu_hat.clone(),
        });
    }

    state.model = model;
    state.policies = policies;
    state.proportions = proportions;
    state.round = t;
    Ok(RoundRecord { round: t, global_accuracy, clients })
}

pub fn run_simulation(cfg: &SimConfig) -> Result<RunSummary> {
    let mut state = SimState::init(cfg)?;
    let mut records = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        records.push(run_round(&mut state, cfg)?);
    }
    Ok(RunSummary::from_records(records, state.gammas))
}

/// Per-client, per-round global-test accuracy when clients never aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandaloneReport {
    pub clean: Vec<Vec<f64>>,
    pub noisy: Vec<Vec<f64>>,
    /// Level used by each client in the noisy variant.
    pub noisy_levels: Vec<f64>,
}

impl StandaloneReport {
    pub fn mean_clean(&self) -> f64 {
        mean(&self.clean.iter().flatten().copied().collect::<Vec<_>>())
    }

    pub fn mean_noisy(&self) -> f64 {
        mean(&self.noisy.iter().flatten().copied().collect::<Vec<_>>())
    }
}

/// Every client trains alone for `rounds` rounds on the same data and noise
/// streams as in the federated run, merging its own update with weight 1.
///
/// The noisy variant uses `fixed_levels` when given, otherwise the largest
/// level of the action set.
pub fn standalone_baseline(cfg: &SimConfig) -> Result<StandaloneReport> {
    // Standalone training never aggregates, so the LOO client minimum does not apply.
    let mut probe = cfg.clone();
    probe.aggregator = Aggregator::FloraUniform;
    let state = SimState::init(&probe)?;
    let max_level = *state.actions.levels().last().expect("non-empty action set");
    let noisy_levels: Vec<f64> = (0..cfg.n_clients)
        .map(|i| if cfg.fixed_levels.is_empty() { max_level } else { cfg.fixed_level(i) })
        .collect();
    let trajectory = |client: usize, level: f64| -> Result<Vec<f64>> {
        let mut model = state.model.clone();
        let mut acc = Vec::with_capacity(cfg.rounds as usize);
        for t in 1..=cfg.rounds {
            let (_, adapter) =
                train_client(cfg, &model, &state.mixture, &state.proportions[client], client, t)?;
            let upload = perturb_client(cfg, &adapter, level, client, t)?;
            let delta = aggregate_stacked(&[upload], &WeightVector::uniform(1))?;
            model = model.merged(&(delta * cfg.task.scale()))?;
            acc.push(evaluate(&model, &state.test_set));
        }
        Ok(acc)
    };
    let clean = (0..cfg.n_clients).into_par_iter().map(|i| trajectory(i, 0.0)).collect::<Result<_>>()?;
    let noisy = (0..cfg.n_clients)
        .into_par_iter()
        .map(|i| trajectory(i, noisy_levels[i]))
        .collect::<Result<_>>()?;
    Ok(StandaloneReport { clean, noisy, noisy_levels })
}
