use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ActionSetSpec, SimConfig};
use super::{run_simulation, RunSummary};
use crate::error::{Result, SimError};

/// Cell `k` of a sweep runs with `seed + k * SWEEP_SEED_STRIDE`.
pub const SWEEP_SEED_STRIDE: u64 = 1_000_003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    GammaMu,
    AlphaDir,
    NClients,
    BiasRho,
    ActionSet,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::GammaMu => "gamma_mu",
            SweepAxis::AlphaDir => "alpha_dir",
            SweepAxis::NClients => "n_clients",
            SweepAxis::BiasRho => "bias_rho",
            SweepAxis::ActionSet => "action_set",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &SimConfig, value: &str) -> Result<SimConfig> {
        let mut cfg = base.clone();
        let num = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|e| SimError::Config(format!("{} value {value:?}: {e}", self.name())))
        };
        match self {
            SweepAxis::GammaMu => cfg.gamma_mu = num()?,
            SweepAxis::AlphaDir => cfg.alpha_dir = num()?,
            SweepAxis::BiasRho => cfg.bias_rho = num()?,
            SweepAxis::NClients => {
                cfg.n_clients = value
                    .trim()
                    .parse()
                    .map_err(|e| SimError::Config(format!("n_clients value {value:?}: {e}")))?
            }
            SweepAxis::ActionSet => cfg.action_set = ActionSetSpec::Preset(value.trim().to_string()),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gamma_mu" => SweepAxis::GammaMu,
            "alpha_dir" => SweepAxis::AlphaDir,
            "n_clients" => SweepAxis::NClients,
            "bias_rho" => SweepAxis::BiasRho,
            "action_set" => SweepAxis::ActionSet,
            other => return Err(SimError::Config(format!("unknown sweep axis {other:?}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: String,
    pub seed: u64,
    pub config: Option<SimConfig>,
    pub outcome: std::result::Result<RunSummary, SimError>,
}

/// Runs one simulation per value. Failing cells are recorded, not fatal.
pub fn run_sweep(base: &SimConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(SimError::Config("sweep needs at least one value".into()));
    }
    Ok(values
        .par_iter()
        .enumerate()
        .map(|(k, value)| {
            let seed = base.seed.wrapping_add(k as u64 * SWEEP_SEED_STRIDE);
            let seeded = SimConfig { seed, ..base.clone() };
            match axis.apply(&seeded, value) {
                Ok(cfg) => {
                    let outcome = run_simulation(&cfg);
                    SweepCell { value: value.clone(), seed, config: Some(cfg), outcome }
                }
                Err(e) => SweepCell { value: value.clone(), seed, config: None, outcome: Err(e) },
            }
        })
        .collect())
}
