//! Client-side noise adaptation: a UCB bandit over a discrete set of noise
//! levels, with exponentially weighted utility estimates.
//!
//! ```text
//! I_k = mu_hat_k + kappa * sqrt(2 ln t / max(1, n_k))
//! mu_hat_k <- (1 - beta) mu_hat_k + beta * U
//! ```

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Sorted, distinct noise levels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionSet {
    levels: Vec<f64>,
}

impl ActionSet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(SimError::Config("action set is empty".into()));
        }
        if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(SimError::Config(format!("action levels {levels:?} must lie in [0, 1]")));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::Config(format!(
                "action levels {levels:?} must be strictly increasing"
            )));
        }
        Ok(Self { levels })
    }

    /// `{0, 0.1, 0.5, 1.0}`
    pub fn coarse() -> Self {
        Self { levels: vec![0.0, 0.1, 0.5, 1.0] }
    }

    /// `{0, 0.2, ..., 1.0}`
    pub fn moderate() -> Self {
        Self { levels: (0..=5).map(|k| k as f64 / 5.0).collect() }
    }

    /// `{0, 0.1, ..., 1.0}`
    pub fn fine() -> Self {
        Self { levels: (0..=10).map(|k| k as f64 / 10.0).collect() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "coarse" => Some(Self::coarse()),
            "moderate" => Some(Self::moderate()),
            "fine" => Some(Self::fine()),
            _ => None,
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, k: usize) -> f64 {
        self.levels[k]
    }
}

impl TryFrom<Vec<f64>> for ActionSet {
    type Error = SimError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ActionSet> for Vec<f64> {
    fn from(a: ActionSet) -> Self {
        a.levels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcbState {
    pub mu_hat: Vec<f64>,
    pub counts: Vec<u64>,
    /// Number of updates applied so far.
    pub round: u64,
}

impl UcbState {
    pub fn new(n_actions: usize, mu0: f64) -> Self {
        Self { mu_hat: vec![mu0; n_actions], counts: vec![0; n_actions], round: 0 }
    }

    pub fn n_actions(&self) -> usize {
        self.mu_hat.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyPreference {
    pub gamma: f64,
}

pub fn ucb_index(state: &UcbState, kappa: f64, t: u64) -> Vec<f64> {
    let log_t = (t.max(1) as f64).ln();
    state
        .mu_hat
        .iter()
        .zip(&state.counts)
        .map(|(mu, &n)| mu + kappa * (2.0 * log_t / n.max(1) as f64).sqrt())
        .collect()
}

/// Index of the largest UCB score; ties go to the lowest index.
pub fn ucb_select(state: &UcbState, actions: &ActionSet, kappa: f64, t: u64) -> usize {
    debug_assert_eq!(state.n_actions(), actions.len());
    let idx = ucb_index(state, kappa, t);
    let mut best = 0;
    for (k, &v) in idx.iter().enumerate().skip(1) {
        if v > idx[best] {
            best = k;
        }
    }
    best
}

pub fn ucb_update(state: &mut UcbState, k: usize, utility: f64, beta: f64) {
    state.counts[k] += 1;
    state.mu_hat[k] = (1.0 - beta) * state.mu_hat[k] + beta * utility;
    state.round += 1;
}

/// Normalized utility `(accuracy + gamma * level) / (1 + gamma)`.
pub fn client_utility(local_accuracy: f64, noise_level: f64, gamma: f64) -> f64 {
    (local_accuracy + gamma * noise_level) / (1.0 + gamma)
}

/// I.i.d. `N(mu, std^2)` preferences, clamped below at zero.
pub fn sample_preferences<R: Rng + ?Sized>(
    n: usize,
    mu: f64,
    std: f64,
    rng: &mut R,
) -> Result<Vec<PrivacyPreference>> {
    if !(std >= 0.0 && std.is_finite() && mu.is_finite()) {
        return Err(SimError::Config(format!("bad preference distribution N({mu}, {std}^2)")));
    }
    let normal = Normal::new(mu, std).expect("validated parameters");
    Ok((0..n)
        .map(|_| PrivacyPreference { gamma: normal.sample(rng).max(0.0) })
        .collect())
}
