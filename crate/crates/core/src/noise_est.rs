//! Server-side noise estimation from uploaded adapters.
//!
//! For client `i` the other clients' flattened matrices form the columns of
//! `X(-i)`. After centering by their mean `mu(-i)`, the top-`K` left singular
//! vectors span a shared subspace. The part of `x_i - mu(-i)` left outside
//! that subspace is treated as client-specific noise:
//!
//! ```text
//! sigma_hat_i^2 = ||r_i||^2 / max(d - K, 1)
//! ```
//!
//! `X(-i)` has only `N - 1` columns, so the left singular vectors are obtained
//! from the eigendecomposition of the small Gram matrix `X^T X` and then
//! re-orthonormalized. `K` is the number of available singular vectors minus
//! one, capped by the numerical rank (singular values above
//! `1e-10 * sigma_max(X)`).

use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::AdapterPair;
use crate::error::{Result, SimError};
use crate::Matrix;

const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationSource {
    #[default]
    BOnly,
    AOnly,
    /// Mean of the B-only and A-only estimates.
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimates {
    sigma_hat: Vec<f64>,
    source: EstimationSource,
}

impl NoiseEstimates {
    pub fn new(sigma_hat: Vec<f64>, source: EstimationSource) -> Result<Self> {
        if let Some(bad) = sigma_hat.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(SimError::NonFinite(format!("noise estimate {bad}")));
        }
        Ok(Self { sigma_hat, source })
    }

    pub fn sigma_hat(&self) -> &[f64] {
        &self.sigma_hat
    }

    pub fn source(&self) -> EstimationSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.sigma_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_hat.is_empty()
    }
}

/// Result of one leave-one-out projection.
#[derive(Debug, Clone)]
pub struct LooProjection {
    /// `(I - P_i)(x_i - mu(-i))`.
    pub residual: DVector<f64>,
    /// Orthonormal basis of the shared subspace, `d x K`.
    pub basis: Matrix,
}

impl LooProjection {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn sigma_hat(&self) -> f64 {
        let d = self.residual.len();
        let denom = d.saturating_sub(self.k()).max(1) as f64;
        (self.residual.norm_squared() / denom).sqrt()
    }
}

fn flatten(m: &Matrix) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn centered_others(columns: &[DVector<f64>], i: usize) -> (Matrix, DVector<f64>) {
    let d = columns[i].len();
    let m = columns.len() - 1;
    let mut mu = DVector::zeros(d);
    for (j, c) in columns.iter().enumerate() {
        if j != i {
            mu += c;
        }
    }
    mu /= m as f64;
    let mut x = Matrix::zeros(d, m);
    let mut col = 0;
    for (j, c) in columns.iter().enumerate() {
        if j != i {
            x.set_column(col, &(c - &mu));
            col += 1;
        }
    }
    (x, mu)
}

/// Orthonormal basis for the top singular directions of `x`, at most `max_k` wide.
fn top_left_subspace(x: &Matrix, max_k: usize) -> Matrix {
    let d = x.nrows();
    if max_k == 0 || x.ncols() == 0 {
        return Matrix::zeros(d, 0);
    }
    let gram = x.transpose() * x;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Matrix::zeros(d, 0);
    }
    let cutoff = RANK_RTOL * top.sqrt();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_k);
    for &j in &order {
        if basis.len() == max_k {
            break;
        }
        // u = X v has norm equal to the singular value; orthogonalizing against
        // the accepted columns measures what remains of it in finite precision.
        let mut u = x * eig.eigenvectors.column(j);
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&u);
                u.axpy(-c, q, 1.0);
            }
        }
        let norm = u.norm();
        if norm <= cutoff {
            break;
        }
        basis.push(u / norm);
    }
    if basis.is_empty() {
        Matrix::zeros(d, 0)
    } else {
        Matrix::from_columns(&basis)
    }
}

fn project_out(basis: &Matrix, v: &DVector<f64>) -> DVector<f64> {
    let mut r = v.clone();
    if basis.ncols() == 0 {
        return r;
    }
    for _ in 0..2 {
        let coeffs = basis.transpose() * &r;
        r -= basis * coeffs;
    }
    r
}

/// Leave-one-out projection of column `i` against the remaining columns.
pub fn loo_residual(columns: &[DVector<f64>], i: usize) -> LooProjection {
    let (x, mu) = centered_others(columns, i);
    let max_k = x.ncols().saturating_sub(1);
    let basis = top_left_subspace(&x, max_k);
    let residual = project_out(&basis, &(&columns[i] - mu));
    LooProjection { residual, basis }
}

fn loo_sigmas(columns: &[DVector<f64>]) -> Vec<f64> {
    (0..columns.len())
        .into_par_iter()
        .map(|i| loo_residual(columns, i).sigma_hat())
        .collect()
}

/// Leave-one-out PCA noise estimate for every client.
pub fn estimate_loo_pca<T: AsRef<AdapterPair> + Sync>(
    updates: &[T],
    source: EstimationSource,
) -> Result<NoiseEstimates> {
    if updates.len() < 3 {
        return Err(SimError::TooFewClients(updates.len()));
    }
    let first = updates[0].as_ref();
    for (i, u) in updates.iter().enumerate() {
        let u = u.as_ref();
        if u.a().shape() != first.a().shape() || u.b().shape() != first.b().shape() {
            return Err(SimError::ShapeMismatch(format!("update {i} differs in adapter shape")));
        }
    }
    let cols = |pick: fn(&AdapterPair) -> &Matrix| -> Vec<DVector<f64>> {
        updates.iter().map(|u| flatten(pick(u.as_ref()))).collect()
    };
    let sigma_hat = match source {
        EstimationSource::BOnly => loo_sigmas(&cols(AdapterPair::b)),
        EstimationSource::AOnly => loo_sigmas(&cols(AdapterPair::a)),
        EstimationSource::Combined => {
            let b = loo_sigmas(&cols(AdapterPair::b));
            let a = loo_sigmas(&cols(AdapterPair::a));
            b.iter().zip(&a).map(|(x, y)| 0.5 * (x + y)).collect()
        }
    };
    NoiseEstimates::new(sigma_hat, source)
}

/// Robustness hook: raises every estimate to the power `rho`.
pub fn apply_estimation_bias(est: &NoiseEstimates, rho: f64) -> Result<NoiseEstimates> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(SimError::Config(format!("bias exponent must be positive, got {rho}")));
    }
    let sigma_hat = est
        .sigma_hat
        .iter()
        .map(|&s| if s == 0.0 { 0.0 } else { s.powf(rho) })
        .collect();
    NoiseEstimates::new(sigma_hat, est.source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_columns(n: usize, d: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
            .collect()
    }

    /// Independent route: Householder QR of the first `m - 1` centered
    /// columns, which span the whole centered set for generic input.
    fn qr_sigma(columns: &[DVector<f64>], i: usize) -> f64 {
        let (x, mu) = centered_others(columns, i);
        let k = x.ncols() - 1;
        let q = x.columns(0, k).into_owned().qr().q();
        let r = &columns[i] - mu;
        let r = &r - &q * (q.transpose() * &r);
        (r.norm_squared() / (r.len() - k) as f64).sqrt()
    }

    #[test]
    fn gram_route_matches_qr_projection() {
        for (n, d, seed) in [(3, 5, 1), (5, 12, 2), (8, 40, 3), (10, 9, 4)] {
            let cols = random_columns(n, d, seed);
            for i in 0..n {
                let a = loo_residual(&cols, i).sigma_hat();
                let b = qr_sigma(&cols, i);
                assert!((a - b).abs() <= 1e-10 * b.max(1e-12), "n={n} d={d} i={i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn k_is_available_columns_minus_one() {
        let cols = random_columns(10, 50, 7);
        let p = loo_residual(&cols, 0);
        assert_eq!(p.k(), 8);
    }

    #[test]
    fn identical_updates_give_zero_estimates() {
        let a = Matrix::from_fn(2, 6, |i, j| 0.1 * (i as f64 + 1.0) - 0.03 * j as f64);
        let b = Matrix::from_fn(5, 2, |i, j| 0.7 - 0.2 * i as f64 + 0.1 * j as f64);
        let ad = AdapterPair::new(a, b).unwrap();
        let ups = vec![ad; 6];
        for source in [EstimationSource::BOnly, EstimationSource::AOnly, EstimationSource::Combined] {
            let est = estimate_loo_pca(&ups, source).unwrap();
            assert!(est.sigma_hat().iter().all(|&s| s < 1e-12), "{:?}", est.sigma_hat());
        }
    }

    #[test]
    fn degenerate_zero_others_fall_back_to_raw_residual() {
        let mut cols = vec![DVector::zeros(4); 4];
        cols[2] = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]);
        let p = loo_residual(&cols, 2);
        assert_eq!(p.k(), 0);
        assert!((p.sigma_hat() - (4.0f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_too_few_clients() {
        let ad = AdapterPair::new(Matrix::zeros(1, 2), Matrix::zeros(2, 1)).unwrap();
        assert_eq!(
            estimate_loo_pca(&[ad.clone(), ad], EstimationSource::BOnly).unwrap_err(),
            SimError::TooFewClients(2)
        );
    }

    #[test]
    fn bias_hand_values() {
        let e = NoiseEstimates::new(vec![0.04, 0.25, 0.0], EstimationSource::BOnly).unwrap();
        let same = apply_estimation_bias(&e, 1.0).unwrap();
        assert_eq!(same, e);
        let b = apply_estimation_bias(&e, 0.5).unwrap();
        assert!((b.sigma_hat()[0] - 0.2).abs() < 1e-12);
        assert!((b.sigma_hat()[1] - 0.5).abs() < 1e-12);
        assert_eq!(b.sigma_hat()[2], 0.0);
        assert!(apply_estimation_bias(&e, 0.0).is_err());
    }

    #[test]
    fn noise_on_one_client_raises_and_flags_its_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let signal = DVector::from_fn(200, |_, _| StandardNormal.sample(&mut rng));
        let mut flagged = 0;
        let mut kept = 0;
        let mut raised = 0;
        for trial in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let mk = |scale: f64, sd: f64, rng: &mut ChaCha8Rng| -> DVector<f64> {
                &signal * scale
                    + DVector::from_fn(200, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
            };
            let base: Vec<DVector<f64>> =
                (0..8).map(|k| mk(1.0 + 0.1 * k as f64, 0.005 + 0.005 * k as f64, &mut rng)).collect();
            let mut noisy = base.clone();
            noisy[3] += DVector::from_fn(200, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal));
            let before = loo_sigmas(&base);
            let after = loo_sigmas(&noisy);
            if after[3] > before[3] {
                raised += 1;
            }
            let top = (0..after.len()).max_by(|&a, &b| after[a].total_cmp(&after[b])).unwrap();
            if top == 3 {
                flagged += 1;
            }
            let clean_argmin = |v: &[f64]| {
                (0..v.len()).filter(|&j| j != 3).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
            };
            if clean_argmin(&before) == clean_argmin(&after) {
                kept += 1;
            }
        }
        assert_eq!(raised, 20);
        assert_eq!(flagged, 20);
        assert_eq!(kept, 20);
    }

    proptest! {
        #[test]
        fn residual_is_orthogonal_to_subspace(n in 3usize..9, d in 10usize..30, seed in 0u64..1000) {
            let cols = random_columns(n, d, seed);
            for i in 0..n {
                let p = loo_residual(&cols, i);
                let pr = (&p.basis * (p.basis.transpose() * &p.residual)).norm();
                prop_assert!(pr <= 1e-8 * p.residual.norm().max(1e-300));
            }
        }

        #[test]
        fn estimates_are_permutation_equivariant(seed in 0u64..500, shift in 1usize..6) {
            let cols = random_columns(6, 15, seed);
            let est = loo_sigmas(&cols);
            let mut perm: Vec<usize> = (0..6).collect();
            perm.rotate_left(shift);
            let permuted: Vec<DVector<f64>> = perm.iter().map(|&j| cols[j].clone()).collect();
            let est_p = loo_sigmas(&permuted);
            for (pos, &j) in perm.iter().enumerate() {
                prop_assert!((est_p[pos] - est[j]).abs() <= 1e-10 * est[j].max(1e-12));
            }
        }
    }
}
