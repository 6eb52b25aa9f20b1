//! Fixed-seed property suites run by the `check` subcommand.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::adapters::{aggregate_stacked, stacked_factors, AdapterPair};
use crate::error::SimError;
use crate::incentive::WeightVector;
use crate::noise_est::{estimate_loo_pca, EstimationSource};
use crate::policy::{ucb_select, ucb_update, ActionSet, UcbState};
use crate::stats::{mean, spearman};
use crate::task::loss_and_grad;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Estimation,
    Bandit,
    Gradients,
    Aggregation,
}

impl FromStr for Suite {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        Ok(match s {
            "estimation" => Suite::Estimation,
            "bandit" => Suite::Bandit,
            "gradients" => Suite::Gradients,
            "aggregation" => Suite::Aggregation,
            other => return Err(SimError::Config(format!("unknown check suite {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    AtLeast,
    AtMost,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub statistic: f64,
    pub threshold: f64,
    pub bound: Bound,
}

impl CheckOutcome {
    fn new(name: &'static str, statistic: f64, bound: Bound, threshold: f64) -> Self {
        Self { name, statistic, threshold, bound }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtLeast => self.statistic >= self.threshold,
            Bound::AtMost => self.statistic <= self.threshold,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtLeast => ">=",
            Bound::AtMost => "<=",
        };
        write!(
            f,
            "{} {}: {:.6e} {op} {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.threshold
        )
    }
}

pub fn run(suite: Suite) -> Vec<CheckOutcome> {
    match suite {
        Suite::Estimation => vec![estimation_ranking()],
        Suite::Bandit => vec![bandit_convergence()],
        Suite::Gradients => vec![gradient_fd()],
        Suite::Aggregation => aggregation_identities(),
    }
}

fn gaussian(rows: usize, cols: usize, sd: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Ten clients whose adapters are scalar multiples of one shared pair, plus
/// Gaussian noise with stds `0.00, 0.01, ..., 0.09`.
pub fn shared_signal_clients(seed: u64) -> (Vec<AdapterPair>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, d_in, d_out) = (4, 64, 64);
    let shared_a = gaussian(r, d_in, 1.0, &mut rng);
    let shared_b = gaussian(d_out, r, 1.0, &mut rng);
    let stds: Vec<f64> = (0..10).map(|k| 0.01 * k as f64).collect();
    let clients = stds
        .iter()
        .map(|&sd| {
            let c: f64 = 1.0 + 0.2 * rng.sample::<f64, _>(StandardNormal);
            let a = &shared_a * c + gaussian(r, d_in, sd, &mut rng);
            let b = &shared_b * c + gaussian(d_out, r, sd, &mut rng);
            AdapterPair::new(a, b).expect("finite")
        })
        .collect();
    (clients, stds)
}

fn estimation_ranking() -> CheckOutcome {
    let rhos: Vec<f64> = (0..20)
        .map(|seed| {
            let (clients, stds) = shared_signal_clients(seed);
            let est = estimate_loo_pca(&clients, EstimationSource::BOnly).expect("valid input");
            spearman(est.sigma_hat(), &stds)
        })
        .collect();
    CheckOutcome::new("mean spearman(sigma_hat, true std) over 20 seeds", mean(&rhos), Bound::AtLeast, 0.95)
}

/// Fraction of best-arm pulls in rounds 151-200 of a Bernoulli(0.9)/(0.1)
/// two-armed bandit, averaged over 50 seeds.
pub fn bandit_best_arm_fraction(kappa: f64, beta: f64, mu0: f64) -> f64 {
    let actions = ActionSet::new(vec![0.0, 1.0]).expect("valid");
    let means = [0.9, 0.1];
    let fracs: Vec<f64> = (0..50)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut s = UcbState::new(2, mu0);
            let mut best = 0;
            for t in 1..=200u64 {
                let k = ucb_select(&s, &actions, kappa, t);
                let reward = if rng.random::<f64>() < means[k] { 1.0 } else { 0.0 };
                ucb_update(&mut s, k, reward, beta);
                if t > 150 && k == 0 {
                    best += 1;
                }
            }
            best as f64 / 50.0
        })
        .collect();
    mean(&fracs)
}

fn bandit_convergence() -> CheckOutcome {
    CheckOutcome::new(
        "best-arm fraction, rounds 151-200, 50 seeds",
        bandit_best_arm_fraction(0.2, 0.3, 1.0),
        Bound::AtLeast,
        0.8,
    )
}

/// Largest relative gap between analytic adapter gradients and central
/// finite differences on a random 3-sample batch.
pub fn max_fd_relative_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_in, d_out, r) = (6, 4, 2);
    let frozen = gaussian(d_out, d_in, 0.5, &mut rng);
    let adapter = AdapterPair::new(gaussian(r, d_in, 0.5, &mut rng), gaussian(d_out, r, 0.5, &mut rng))
        .expect("finite");
    let x = gaussian(3, d_in, 1.5, &mut rng);
    let y = vec![1, 3, 0];
    let scale = 2.0;
    let (_, grad_a, grad_b) = loss_and_grad(&frozen, &adapter, scale, &x, &y);
    let loss = |a: &Matrix, b: &Matrix| {
        let p = AdapterPair::new(a.clone(), b.clone()).expect("finite");
        loss_and_grad(&frozen, &p, scale, &x, &y).0
    };
    let h = 1e-5;
    let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
    let mut worst: f64 = 0.0;
    for idx in 0..grad_a.len() {
        let (mut p, mut m) = (adapter.a().clone(), adapter.a().clone());
        p[idx] += h;
        m[idx] -= h;
        let fd = (loss(&p, adapter.b()) - loss(&m, adapter.b())) / (2.0 * h);
        worst = worst.max(rel(fd, grad_a[idx]));
    }
    for idx in 0..grad_b.len() {
        let (mut p, mut m) = (adapter.b().clone(), adapter.b().clone());
        p[idx] += h;
        m[idx] -= h;
        let fd = (loss(adapter.a(), &p) - loss(adapter.a(), &m)) / (2.0 * h);
        worst = worst.max(rel(fd, grad_b[idx]));
    }
    worst
}

fn gradient_fd() -> CheckOutcome {
    let worst = (0..5).map(max_fd_relative_error).fold(0.0, f64::max);
    CheckOutcome::new("max relative finite-difference error", worst, Bound::AtMost, 1e-4)
}

fn aggregation_identities() -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let ups: Vec<AdapterPair> = (0..7)
        .map(|_| AdapterPair::new(gaussian(3, 9, 1.0, &mut rng), gaussian(5, 3, 1.0, &mut rng)).expect("finite"))
        .collect();
    let raw: Vec<f64> = (0..7).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let w = WeightVector::new(raw.iter().map(|x| x / total).collect()).expect("simplex");
    let summed = aggregate_stacked(&ups, &w).expect("shapes");
    let (bg, ag) = stacked_factors(&ups, &w).expect("shapes");
    let block_gap = (&summed - bg * ag).abs().max();
    let mut by_parts = Matrix::zeros(summed.nrows(), summed.ncols());
    for (u, wi) in ups.iter().zip(w.as_slice()) {
        by_parts += aggregate_stacked(std::slice::from_ref(u), &WeightVector::uniform(1)).expect("shapes") * *wi;
    }
    let linear_gap = (&summed - by_parts).abs().max();
    vec![
        CheckOutcome::new("stacked product-sum vs block matrix (max abs)", block_gap, Bound::AtMost, 1e-10),
        CheckOutcome::new("aggregation linearity (max abs)", linear_gap, Bound::AtMost, 1e-10),
    ]
}
