use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::incentive::DEFAULT_TAU;
use crate::noise_est::EstimationSource;
use crate::policy::ActionSet;
use crate::task::TaskConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// LOO-PCA estimates, inverse-noise weights, weighted stacking.
    #[default]
    Winflora,
    /// Uniform stacking.
    FloraUniform,
    /// Separate averaging of `A` and `B`.
    FeditAvg,
}

/// Either a named preset (`coarse`, `moderate`, `fine`) or explicit levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionSetSpec {
    Preset(String),
    Levels(Vec<f64>),
}

impl Default for ActionSetSpec {
    fn default() -> Self {
        ActionSetSpec::Preset("coarse".into())
    }
}

impl ActionSetSpec {
    pub fn resolve(&self) -> Result<ActionSet> {
        match self {
            ActionSetSpec::Preset(name) => ActionSet::preset(name)
                .ok_or_else(|| SimError::Config(format!("unknown action set preset {name:?}"))),
            ActionSetSpec::Levels(v) => ActionSet::new(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_clients: usize,
    pub rounds: u32,
    pub alpha_dir: f64,
    pub gamma_mu: f64,
    pub gamma_std: f64,
    pub sigma_max: f64,
    pub action_set: ActionSetSpec,
    pub kappa: f64,
    pub beta: f64,
    pub mu_0: f64,
    pub aggregator: Aggregator,
    pub estimation_source: EstimationSource,
    pub bias_rho: f64,
    pub tau: f64,
    /// Clients choose their level with UCB when set, otherwise they use `fixed_levels`.
    pub ina_enabled: bool,
    /// Fixed per-client levels, assigned cyclically (`client i -> fixed_levels[i % len]`).
    /// Empty means every client stays at level 0.
    pub fixed_levels: Vec<f64>,
    pub task: TaskConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_clients: 10,
            rounds: 20,
            alpha_dir: 0.3,
            gamma_mu: 0.5,
            gamma_std: 0.1,
            sigma_max: 0.1,
            action_set: ActionSetSpec::default(),
            kappa: 0.05,
            beta: 0.3,
            mu_0: 1.0,
            aggregator: Aggregator::Winflora,
            estimation_source: EstimationSource::BOnly,
            bias_rho: 1.0,
            tau: DEFAULT_TAU,
            ina_enabled: true,
            fixed_levels: Vec::new(),
            task: TaskConfig::default(),
        }
    }
}

/// Fixed-noise profile used for the baseline comparisons.
pub const HETEROGENEOUS_PROFILE: [f64; 10] = [0.0, 0.0, 0.1, 0.1, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0];

impl SimConfig {
    /// Fixed-noise mode with the heterogeneous baseline profile.
    pub fn with_fixed_profile(mut self, levels: &[f64]) -> Self {
        self.ina_enabled = false;
        self.fixed_levels = levels.to_vec();
        self
    }

    pub fn fixed_level(&self, client: usize) -> f64 {
        if self.fixed_levels.is_empty() {
            0.0
        } else {
            self.fixed_levels[client % self.fixed_levels.len()]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SimError::Config(m));
        if self.n_clients == 0 {
            return err("n_clients must be positive".into());
        }
        if self.aggregator == Aggregator::Winflora && self.n_clients < 3 {
            return err(format!(
                "winflora aggregation needs n_clients >= 3, got {}",
                self.n_clients
            ));
        }
        if self.rounds == 0 {
            return err("rounds must be at least 1".into());
        }
        if !(self.alpha_dir > 0.0) {
            return err(format!("alpha_dir must be positive, got {}", self.alpha_dir));
        }
        if !(self.gamma_std >= 0.0 && self.gamma_mu.is_finite()) {
            return err("gamma_std must be non-negative and gamma_mu finite".into());
        }
        if !(self.sigma_max > 0.0 && self.sigma_max.is_finite()) {
            return err(format!("sigma_max must be positive, got {}", self.sigma_max));
        }
        if !(self.kappa > 0.0) {
            return err(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return err(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.bias_rho > 0.0 && self.bias_rho.is_finite()) {
            return err(format!("bias_rho must be positive, got {}", self.bias_rho));
        }
        if !(self.tau > 0.0) {
            return err(format!("tau must be positive, got {}", self.tau));
        }
        if let Some(l) = self.fixed_levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return err(format!("fixed level {l} outside [0, 1]"));
        }
        self.action_set.resolve()?;
        self.task.validate()
    }
}
