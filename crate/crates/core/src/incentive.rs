//! Noise-aware weight allocation: inverse-noise scores normalized onto the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::noise_est::NoiseEstimates;

/// Default stabilizer added to every noise estimate before inversion.
pub const DEFAULT_TAU: f64 = 1e-8;

const SIMPLEX_TOL: f64 = 1e-9;

/// Aggregation weights: every entry in `(0, 1]`, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SimError::InvalidWeights("empty weight vector".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(SimError::InvalidWeights(format!("entry {bad} outside (0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(SimError::InvalidWeights(format!("entries sum to {sum}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need at least one client");
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// `w_i = s_i / sum_j s_j` with `s_i = 1 / (sigma_hat_i + tau)`.
///
/// No cap is applied: a client whose estimate is near zero can take almost all
/// of the weight.
pub fn nwa_weights(est: &NoiseEstimates, tau: f64) -> Result<WeightVector> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SimError::Config(format!("tau must be positive, got {tau}")));
    }
    let scores: Vec<f64> = est.sigma_hat().iter().map(|s| 1.0 / (s + tau)).collect();
    let total: f64 = scores.iter().sum();
    WeightVector::new(scores.into_iter().map(|s| s / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_est::{apply_estimation_bias, EstimationSource};
    use proptest::prelude::*;

    fn est(v: &[f64]) -> NoiseEstimates {
        NoiseEstimates::new(v.to_vec(), EstimationSource::BOnly).unwrap()
    }

    #[test]
    fn equal_estimates_give_uniform_weights() {
        let w = nwa_weights(&est(&[0.3; 5]), DEFAULT_TAU).unwrap();
        assert!(w.as_slice().iter().all(|x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn two_client_hand_value() {
        let w = nwa_weights(&est(&[0.1, 0.2]), DEFAULT_TAU).unwrap();
        assert!((w.as_slice()[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((w.as_slice()[1] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_noise_client_dominates() {
        let w = nwa_weights(&est(&[0.0, 0.1, 0.1]), DEFAULT_TAU).unwrap();
        // 1e8 / (1e8 + 2 * 10) -> 1 - 2e-7
        assert!(w.as_slice()[0] > 1.0 - 1e-6);
        assert!(w.as_slice()[0] < 1.0);
        assert!(w.as_slice()[1] > 0.0);
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![0.25, 0.75]).is_ok());
    }

    proptest! {
        #[test]
        fn simplex_and_order_reversal(s in proptest::collection::vec(0.0f64..2.0, 1..12),
                                      c in 0.1f64..10.0, rho in 0.5f64..2.0) {
            let e = est(&s);
            let w = nwa_weights(&e, DEFAULT_TAU).unwrap();
            let sum: f64 = w.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(w.as_slice().iter().all(|x| *x > 0.0));

            let scaled = est(&s.iter().map(|x| x * c).collect::<Vec<_>>());
            let ws = nwa_weights(&scaled, DEFAULT_TAU).unwrap();
            let biased = nwa_weights(&apply_estimation_bias(&e, rho).unwrap(), DEFAULT_TAU).unwrap();
            for i in 0..s.len() {
                for j in 0..s.len() {
                    if s[i] < s[j] {
                        prop_assert!(w.as_slice()[i] > w.as_slice()[j]);
                        prop_assert!(ws.as_slice()[i] > ws.as_slice()[j]);
                        prop_assert!(biased.as_slice()[i] >= biased.as_slice()[j]);
                    }
                }
            }
        }
    }
}
