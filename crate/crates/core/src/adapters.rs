//! Low-rank adapters, Gaussian perturbation, and the three aggregation rules.
//!
//! An adapter for a `d_out x d_in` layer is the pair `(B, A)` with
//! `B: d_out x r` and `A: r x d_in`; its weight update is `B * A`.
//! Server-side code receives adapters through `AsRef<AdapterPair>` so it only
//! ever sees the matrices, never the client's true noise level.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SimError};
use crate::incentive::WeightVector;
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterPair {
    a_mat: Matrix,
    b_mat: Matrix,
}

impl AdapterPair {
    pub fn new(a_mat: Matrix, b_mat: Matrix) -> Result<Self> {
        if a_mat.nrows() == 0 || a_mat.nrows() != b_mat.ncols() {
            return Err(SimError::ShapeMismatch(format!(
                "A is {}x{}, B is {}x{}; rank must match and be positive",
                a_mat.nrows(),
                a_mat.ncols(),
                b_mat.nrows(),
                b_mat.ncols()
            )));
        }
        if !a_mat.iter().chain(b_mat.iter()).all(|v| v.is_finite()) {
            return Err(SimError::NonFinite("adapter".into()));
        }
        Ok(Self { a_mat, b_mat })
    }

    pub fn a(&self) -> &Matrix {
        &self.a_mat
    }

    pub fn b(&self) -> &Matrix {
        &self.b_mat
    }

    pub fn rank(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.a_mat.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.b_mat.nrows()
    }

    /// `B * A`, the unscaled weight update.
    pub fn product(&self) -> Matrix {
        &self.b_mat * &self.a_mat
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.a_mat, &mut self.b_mat)
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.a_mat.iter().chain(self.b_mat.iter()).all(|v| v.is_finite())
    }
}

impl AsRef<AdapterPair> for AdapterPair {
    fn as_ref(&self) -> &AdapterPair {
        self
    }
}

/// A perturbed adapter as uploaded by one client in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub round: u32,
    adapter: AdapterPair,
    true_noise_level: f64,
}

impl ClientUpdate {
    pub fn new(client_id: usize, round: u32, adapter: AdapterPair, true_noise_level: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&true_noise_level) {
            return Err(SimError::Config(format!(
                "noise level {true_noise_level} outside [0, 1]"
            )));
        }
        Ok(Self { client_id, round, adapter, true_noise_level })
    }

    pub fn adapter(&self) -> &AdapterPair {
        &self.adapter
    }

    /// The level the client actually used. Evaluation harness only.
    pub fn true_noise_level(&self) -> f64 {
        self.true_noise_level
    }
}

impl AsRef<AdapterPair> for ClientUpdate {
    fn as_ref(&self) -> &AdapterPair {
        &self.adapter
    }
}

/// Frozen backbone plus the accumulated global update.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    base: Matrix,
    delta: Matrix,
}

impl GlobalModel {
    pub fn new(base: Matrix) -> Result<Self> {
        if !base.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite("base weights".into()));
        }
        let delta = Matrix::zeros(base.nrows(), base.ncols());
        Ok(Self { base, delta })
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn delta(&self) -> &Matrix {
        &self.delta
    }

    pub fn d_in(&self) -> usize {
        self.base.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.base.nrows()
    }

    pub fn effective(&self) -> Matrix {
        &self.base + &self.delta
    }

    /// Returns a new model with `delta_g` added to the accumulated update.
    pub fn merged(&self, delta_g: &Matrix) -> Result<Self> {
        if delta_g.shape() != self.base.shape() {
            return Err(SimError::ShapeMismatch(format!(
                "global update {:?} vs model {:?}",
                delta_g.shape(),
                self.base.shape()
            )));
        }
        let delta = &self.delta + delta_g;
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite("merged global update".into()));
        }
        Ok(Self { base: self.base.clone(), delta })
    }
}

pub fn merge_global(model: &GlobalModel, delta_g: &Matrix) -> Result<GlobalModel> {
    model.merged(delta_g)
}

/// Standard LoRA init: `A ~ N(0, init_std^2)` elementwise, `B = 0`.
pub fn init_adapter<R: Rng + ?Sized>(
    rank: usize,
    d_in: usize,
    d_out: usize,
    init_std: f64,
    rng: &mut R,
) -> Result<AdapterPair> {
    if rank == 0 || rank > d_in.min(d_out) {
        return Err(SimError::InvalidRank { rank, d_in, d_out });
    }
    if !(init_std > 0.0 && init_std.is_finite()) {
        return Err(SimError::Config(format!("init_std must be positive, got {init_std}")));
    }
    let normal = Normal::new(0.0, init_std).expect("validated std");
    let a_mat = Matrix::from_fn(rank, d_in, |_, _| normal.sample(rng));
    let b_mat = Matrix::zeros(d_out, rank);
    AdapterPair::new(a_mat, b_mat)
}

/// Adds i.i.d. `N(0, (noise_level * sigma_max)^2)` noise to every entry of
/// both `A` and `B`. Level 0 returns an exact copy.
pub fn perturb_adapter<R: Rng + ?Sized>(
    adapter: &AdapterPair,
    noise_level: f64,
    sigma_max: f64,
    rng: &mut R,
) -> Result<AdapterPair> {
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(SimError::Config(format!("noise level {noise_level} outside [0, 1]")));
    }
    if !(sigma_max > 0.0 && sigma_max.is_finite()) {
        return Err(SimError::Config(format!("sigma_max must be positive, got {sigma_max}")));
    }
    let mut out = adapter.clone();
    if noise_level == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, noise_level * sigma_max).expect("validated std");
    let (a, b) = out.parts_mut();
    a.iter_mut().for_each(|v| *v += normal.sample(rng));
    b.iter_mut().for_each(|v| *v += normal.sample(rng));
    Ok(out)
}

fn check_common_shape<T: AsRef<AdapterPair>>(updates: &[T]) -> Result<(usize, usize)> {
    let first = updates
        .first()
        .ok_or_else(|| SimError::ShapeMismatch("no updates to aggregate".into()))?
        .as_ref();
    let (d_out, d_in) = (first.d_out(), first.d_in());
    for (i, u) in updates.iter().enumerate() {
        let u = u.as_ref();
        if u.d_out() != d_out || u.d_in() != d_in {
            return Err(SimError::ShapeMismatch(format!(
                "update {i} is {}x{}, expected {d_out}x{d_in}",
                u.d_out(),
                u.d_in()
            )));
        }
    }
    Ok((d_out, d_in))
}

/// Weighted stacking aggregation: `sum_i w_i * B_i * A_i`.
///
/// Identical to `[w_1 B_1 | ... | w_N B_N] * [A_1; ...; A_N]` (see
/// [`stacked_factors`]) without materializing the stacked matrices.
pub fn aggregate_stacked<T: AsRef<AdapterPair>>(updates: &[T], weights: &WeightVector) -> Result<Matrix> {
    let (d_out, d_in) = check_common_shape(updates)?;
    if weights.len() != updates.len() {
        return Err(SimError::InvalidWeights(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    let mut out = Matrix::zeros(d_out, d_in);
    for (u, &w) in updates.iter().zip(weights.as_slice()) {
        let u = u.as_ref();
        out.gemm(w, u.b(), u.a(), 1.0);
    }
    Ok(out)
}

/// The literal block-stacked factors `(B_g, A_g)` whose product equals
/// [`aggregate_stacked`]. Used to cross-check the product-sum form.
pub fn stacked_factors<T: AsRef<AdapterPair>>(updates: &[T], weights: &WeightVector) -> Result<(Matrix, Matrix)> {
    let (d_out, d_in) = check_common_shape(updates)?;
    if weights.len() != updates.len() {
        return Err(SimError::InvalidWeights(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    let total_rank: usize = updates.iter().map(|u| u.as_ref().rank()).sum();
    let mut b_g = Matrix::zeros(d_out, total_rank);
    let mut a_g = Matrix::zeros(total_rank, d_in);
    let mut offset = 0;
    for (u, &w) in updates.iter().zip(weights.as_slice()) {
        let u = u.as_ref();
        let r = u.rank();
        b_g.columns_mut(offset, r).copy_from(&(u.b() * w));
        a_g.rows_mut(offset, r).copy_from(u.a());
        offset += r;
    }
    Ok((b_g, a_g))
}

/// Separate-averaging baseline: `mean(B_i) * mean(A_i)`.
pub fn aggregate_avg_separate<T: AsRef<AdapterPair>>(updates: &[T]) -> Result<Matrix> {
    check_common_shape(updates)?;
    let ranks: Vec<usize> = updates.iter().map(|u| u.as_ref().rank()).collect();
    if ranks.iter().any(|&r| r != ranks[0]) {
        return Err(SimError::HeterogeneousRanks(ranks));
    }
    let n = updates.len() as f64;
    let first = updates[0].as_ref();
    let mut b_sum = Matrix::zeros(first.d_out(), first.rank());
    let mut a_sum = Matrix::zeros(first.rank(), first.d_in());
    for u in updates {
        b_sum += u.as_ref().b();
        a_sum += u.as_ref().a();
    }
    Ok((b_sum / n) * (a_sum / n))
}
