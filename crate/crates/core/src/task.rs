//! Synthetic stand-in for fine-tuning: a frozen linear classifier on a
//! Gaussian mixture, Dirichlet non-IID splits, and minibatch SGD on the
//! low-rank adapter only.
//!
//! Logits for a sample `x` are `(W + scale * B A) x` with
//! `scale = lora_alpha / rank`; `W` (base plus accumulated global update) stays
//! frozen while a client trains.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adapters::{init_adapter, AdapterPair, GlobalModel};
use crate::error::{Result, SimError};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row, `n x d_in`.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn class_proportions(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.class_counts().into_iter().map(|c| c as f64 / n).collect()
    }

    fn subset(&self, idx: &[usize], split: Split) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx.iter()),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            split,
        }
    }

    /// Plain-text dump: a `d_in,n_classes,n` header, then `label,x_1,...,x_d` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},{},{}", self.d_in(), self.n_classes, self.len())?;
        for (i, y) in self.labels.iter().enumerate() {
            write!(w, "{y}")?;
            for v in self.features.row(i).iter() {
                write!(w, ",{v:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, split: Split) -> Result<Dataset> {
        let bad = |m: String| SimError::Config(format!("dataset file: {m}"));
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("header {header:?}: {e}")))?;
        let [d_in, n_classes, n] = dims[..] else {
            return Err(bad(format!("header {header:?} must be d_in,n_classes,n")));
        };
        let mut feats = Vec::with_capacity(n * d_in);
        let mut labels = Vec::with_capacity(n);
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let y: usize = parts
                .next()
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|e| bad(format!("label: {e}")))?;
            if y >= n_classes {
                return Err(bad(format!("label {y} out of range")));
            }
            let row: Vec<f64> = parts
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("feature: {e}")))?;
            if row.len() != d_in {
                return Err(bad(format!("row has {} features, expected {d_in}", row.len())));
            }
            labels.push(y);
            feats.extend(row);
        }
        if labels.len() != n {
            return Err(bad(format!("{} rows, header says {n}", labels.len())));
        }
        Ok(Dataset { features: Matrix::from_row_slice(n, d_in, &feats), labels, n_classes, split })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub d_in: usize,
    /// Number of classes, equal to `d_out` of the classifier.
    pub n_classes: usize,
    pub n_per_client: usize,
    pub class_separation: f64,
    pub rank: usize,
    pub lora_alpha: f64,
    pub init_std: f64,
    /// Std of the frozen backbone's random init.
    pub base_std: f64,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Size of the held-out IID global test set.
    pub test_size: usize,
    /// Re-draw each client's class proportions every round.
    pub fresh_proportions: bool,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            d_in: 32,
            n_classes: 4,
            n_per_client: 500,
            class_separation: 3.0,
            rank: 4,
            lora_alpha: 8.0,
            init_std: 0.1,
            base_std: 0.01,
            learning_rate: 0.01,
            local_epochs: 2,
            batch_size: 32,
            test_size: 2000,
            fresh_proportions: false,
        }
    }
}

impl TaskConfig {
    pub fn d_out(&self) -> usize {
        self.n_classes
    }

    pub fn scale(&self) -> f64 {
        self.lora_alpha / self.rank as f64
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_classes < 2 || self.n_classes > self.d_in {
            return err("need 2 <= n_classes <= d_in");
        }
        if self.rank == 0 || self.rank > self.d_in.min(self.n_classes) {
            return err("rank must be in 1..=min(d_in, n_classes)");
        }
        if !(self.class_separation >= 0.0) {
            return err("class_separation must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.lora_alpha > 0.0 && self.init_std > 0.0 && self.base_std >= 0.0) {
            return err("learning_rate, lora_alpha and init_std must be positive");
        }
        if self.batch_size == 0 || self.n_per_client < self.batch_size {
            return err("need 1 <= batch_size <= n_per_client");
        }
        if self.test_size < self.n_classes {
            return err("test_size must cover every class");
        }
        Ok(())
    }
}

/// Isotropic unit-variance Gaussian classes. Class `c` is centred at
/// `separation / sqrt(2) * e_c`, so every pair of means is exactly
/// `separation` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixture {
    pub d_in: usize,
    pub n_classes: usize,
    pub separation: f64,
}

impl GaussianMixture {
    pub fn new(d_in: usize, n_classes: usize, separation: f64) -> Result<Self> {
        if n_classes == 0 || n_classes > d_in {
            return Err(SimError::Config(format!(
                "cannot place {n_classes} equidistant means in {d_in} dimensions"
            )));
        }
        Ok(Self { d_in, n_classes, separation })
    }

    fn fill_row<R: Rng + ?Sized>(&self, feats: &mut [f64], label: usize, rng: &mut R) {
        let offset = self.separation / std::f64::consts::SQRT_2;
        for (j, v) in feats.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *v = if j == label { z + offset } else { z };
        }
    }

    fn build<R: Rng + ?Sized>(&self, labels: Vec<usize>, split: Split, rng: &mut R) -> Dataset {
        let n = labels.len();
        let mut feats = vec![0.0; n * self.d_in];
        for (row, &y) in feats.chunks_mut(self.d_in).zip(&labels) {
            self.fill_row(row, y, rng);
        }
        Dataset {
            features: Matrix::from_row_slice(n, self.d_in, &feats),
            labels,
            n_classes: self.n_classes,
            split,
        }
    }

    /// Balanced labels: sample `i` has class `i mod C`.
    pub fn sample_balanced<R: Rng + ?Sized>(&self, n: usize, split: Split, rng: &mut R) -> Dataset {
        self.build((0..n).map(|i| i % self.n_classes).collect(), split, rng)
    }

    /// Labels drawn i.i.d. from `proportions`.
    pub fn sample_with_proportions<R: Rng + ?Sized>(
        &self,
        n: usize,
        proportions: &[f64],
        split: Split,
        rng: &mut R,
    ) -> Result<Dataset> {
        let dist = WeightedIndex::new(proportions)
            .map_err(|e| SimError::Config(format!("class proportions {proportions:?}: {e}")))?;
        let labels = (0..n).map(|_| dist.sample(rng)).collect();
        Ok(self.build(labels, split, rng))
    }
}

pub fn gen_mixture_data<R: Rng + ?Sized>(
    n: usize,
    d_in: usize,
    n_classes: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n < n_classes {
        return Err(SimError::Config(format!("{n} samples cannot cover {n_classes} classes")));
    }
    Ok(GaussianMixture::new(d_in, n_classes, separation)?.sample_balanced(n, Split::Train, rng))
}

const MAX_PARTITION_DRAWS: usize = 100;

fn dirichlet<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Option<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).ok()?;
    let g: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let s: f64 = g.iter().sum();
    (s > 0.0 && s.is_finite()).then(|| g.into_iter().map(|x| x / s).collect())
}

/// Splits every class across `n_clients` with `Dirichlet(alpha * 1)` proportions.
///
/// Each class's samples go to clients in contiguous slices cut at the rounded
/// cumulative proportions, so every sample lands in exactly one shard. The
/// whole draw is repeated when some client ends up with fewer than
/// `min_per_client` samples.
pub fn dirichlet_partition<R: Rng + ?Sized>(
    data: &Dataset,
    n_clients: usize,
    alpha_dir: f64,
    min_per_client: usize,
    rng: &mut R,
) -> Result<Vec<Dataset>> {
    if !(alpha_dir > 0.0 && alpha_dir.is_finite()) {
        return Err(SimError::Config(format!("alpha_dir must be positive, got {alpha_dir}")));
    }
    if n_clients == 0 {
        return Err(SimError::Config("need at least one client".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes];
    for (i, &y) in data.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    for _ in 0..MAX_PARTITION_DRAWS {
        let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
        let mut ok = true;
        for idx in &by_class {
            let Some(p) = dirichlet(alpha_dir, n_clients, rng) else {
                ok = false;
                break;
            };
            let mut members = idx.clone();
            members.shuffle(rng);
            let n_c = members.len() as f64;
            let mut cum = 0.0;
            let mut start = 0usize;
            for (client, pk) in p.iter().enumerate() {
                cum += pk;
                let end = if client + 1 == n_clients {
                    members.len()
                } else {
                    ((cum * n_c).round() as usize).clamp(start, members.len())
                };
                shards[client].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
        if ok && shards.iter().all(|s| s.len() >= min_per_client) {
            return Ok(shards.iter().map(|s| data.subset(s, data.split)).collect());
        }
    }
    Err(SimError::InfeasiblePartition(format!(
        "some client kept fewer than {min_per_client} samples after {MAX_PARTITION_DRAWS} draws \
         (n={}, clients={n_clients}, alpha_dir={alpha_dir})",
        data.len()
    )))
}

fn softmax_rows(z: &mut Matrix) {
    for mut row in z.row_iter_mut() {
        let m = row.max();
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Mean cross-entropy and its gradients with respect to `A` and `B`.
pub fn loss_and_grad(
    frozen: &Matrix,
    adapter: &AdapterPair,
    scale: f64,
    x: &Matrix,
    labels: &[usize],
) -> (f64, Matrix, Matrix) {
    let b = labels.len() as f64;
    let h = x * adapter.a().transpose();
    let mut z = x * frozen.transpose();
    z.gemm(scale, &h, &adapter.b().transpose(), 1.0);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = z.row(i);
        let m = row.max();
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
    }
    softmax_rows(&mut z);
    for (i, &y) in labels.iter().enumerate() {
        z[(i, y)] -= 1.0;
    }
    z /= b;
    let grad_b = (z.transpose() * &h) * scale;
    let grad_a = ((&z * adapter.b()).transpose() * x) * scale;
    (loss / b, grad_a, grad_b)
}

pub fn mean_loss(frozen: &Matrix, adapter: &AdapterPair, scale: f64, data: &Dataset) -> f64 {
    loss_and_grad(frozen, adapter, scale, &data.features, &data.labels).0
}

/// Trains a freshly initialized adapter with minibatch SGD and returns it
/// together with the full-data loss after each epoch.
pub fn local_train_with_history<R: Rng + ?Sized>(
    model: &GlobalModel,
    data: &Dataset,
    cfg: &TaskConfig,
    rng: &mut R,
) -> Result<(AdapterPair, Vec<f64>)> {
    if data.is_empty() {
        return Err(SimError::Config("local training on an empty dataset".into()));
    }
    if data.d_in() != model.d_in() || data.n_classes != model.d_out() {
        return Err(SimError::ShapeMismatch(format!(
            "data is {} features / {} classes, model is {}x{}",
            data.d_in(),
            data.n_classes,
            model.d_out(),
            model.d_in()
        )));
    }
    let mut adapter = init_adapter(cfg.rank, model.d_in(), model.d_out(), cfg.init_std, rng)?;
    let frozen = model.effective();
    let scale = cfg.scale();
    let bs = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.local_epochs);
    for epoch in 0..cfg.local_epochs {
        order.shuffle(rng);
        for (step, chunk) in order.chunks(bs).enumerate() {
            let x = data.features.select_rows(chunk.iter());
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, ga, gb) = loss_and_grad(&frozen, &adapter, scale, &x, &y);
            if !loss.is_finite() {
                return Err(SimError::Diverged(format!(
                    "loss {loss} at epoch {epoch} step {step} (lr={}, scale={scale})",
                    cfg.learning_rate
                )));
            }
            let (a, b) = adapter.parts_mut();
            *a -= ga * cfg.learning_rate;
            *b -= gb * cfg.learning_rate;
        }
        if !adapter.is_finite() {
            return Err(SimError::Diverged(format!("non-finite adapter after epoch {epoch}")));
        }
        history.push(mean_loss(&frozen, &adapter, scale, data));
    }
    Ok((adapter, history))
}

pub fn local_train<R: Rng + ?Sized>(
    model: &GlobalModel,
    data: &Dataset,
    cfg: &TaskConfig,
    rng: &mut R,
) -> Result<AdapterPair> {
    local_train_with_history(model, data, cfg, rng).map(|(a, _)| a)
}

/// Argmax-logit accuracy of a weight matrix; ties go to the lowest class.
pub fn accuracy_of(weights: &Matrix, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let z = &data.features * weights.transpose();
    let correct = z
        .row_iter()
        .zip(&data.labels)
        .filter(|(row, &y)| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best == y
        })
        .count();
    correct as f64 / data.len() as f64
}

pub fn evaluate(model: &GlobalModel, data: &Dataset) -> f64 {
    accuracy_of(&model.effective(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn entropy(p: &[f64]) -> f64 {
        -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
    }

    #[test]
    fn balanced_generation() {
        let d = gen_mixture_data(100, 8, 4, 2.0, &mut rng(1)).unwrap();
        assert_eq!(d.class_counts(), vec![25; 4]);
        assert_eq!(d.features.shape(), (100, 8));
        assert!(gen_mixture_data(3, 8, 4, 2.0, &mut rng(1)).is_err());
    }

    #[test]
    fn partition_conserves_samples() {
        let d = gen_mixture_data(2000, 8, 4, 2.0, &mut rng(2)).unwrap();
        let shards = dirichlet_partition(&d, 10, 0.3, 10, &mut rng(3)).unwrap();
        assert_eq!(shards.iter().map(Dataset::len).sum::<usize>(), 2000);
        let mut counts = vec![0; 4];
        for s in &shards {
            for (c, k) in s.class_counts().iter().enumerate() {
                counts[c] += k;
            }
        }
        assert_eq!(counts, d.class_counts());
        // every original row appears exactly once
        let mut rows: Vec<Vec<u64>> = shards
            .iter()
            .flat_map(|s| s.features.row_iter().map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>())
            .collect();
        let mut orig: Vec<Vec<u64>> =
            d.features.row_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        rows.sort();
        orig.sort();
        assert_eq!(rows, orig);
    }

    #[test]
    fn large_alpha_matches_global_proportions() {
        let d = gen_mixture_data(4000, 8, 4, 2.0, &mut rng(4)).unwrap();
        let shards = dirichlet_partition(&d, 10, 1e6, 1, &mut rng(5)).unwrap();
        for s in shards {
            for p in s.class_proportions() {
                assert!((p - 0.25).abs() < 0.05, "{p}");
            }
        }
    }

    #[test]
    fn small_alpha_is_more_heterogeneous() {
        let d = gen_mixture_data(2000, 8, 4, 2.0, &mut rng(6)).unwrap();
        let mean_entropy = |alpha: f64| {
            let mut tot = 0.0;
            let mut cnt = 0.0;
            for seed in 0..50 {
                for s in dirichlet_partition(&d, 10, alpha, 1, &mut rng(100 + seed)).unwrap() {
                    tot += entropy(&s.class_proportions());
                    cnt += 1.0;
                }
            }
            tot / cnt
        };
        assert!(mean_entropy(0.3) < mean_entropy(1e6));
    }

    #[test]
    fn infeasible_partition_is_reported() {
        let d = gen_mixture_data(40, 8, 4, 2.0, &mut rng(7)).unwrap();
        let err = dirichlet_partition(&d, 10, 0.3, 32, &mut rng(8)).unwrap_err();
        assert!(matches!(err, SimError::InfeasiblePartition(_)));
    }

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = TaskConfig { local_epochs: 0, ..TaskConfig::default() };
        let model = GlobalModel::new(Matrix::zeros(4, 32)).unwrap();
        let d = gen_mixture_data(64, 32, 4, 3.0, &mut rng(9)).unwrap();
        let ad = local_train(&model, &d, &cfg, &mut rng(10)).unwrap();
        assert!(ad.product().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(11);
        let normal = Normal::new(0.0, 0.5).unwrap();
        let frozen = Matrix::from_fn(3, 5, |_, _| normal.sample(&mut r));
        let ad = AdapterPair::new(
            Matrix::from_fn(2, 5, |_, _| normal.sample(&mut r)),
            Matrix::from_fn(3, 2, |_, _| normal.sample(&mut r)),
        )
        .unwrap();
        let x = Matrix::from_fn(3, 5, |_, _| normal.sample(&mut r) * 2.0);
        let y = vec![0, 2, 1];
        let scale = 1.7;
        let (_, ga, gb) = loss_and_grad(&frozen, &ad, scale, &x, &y);
        let h = 1e-5;
        let loss_at = |a: &Matrix, b: &Matrix| {
            let p = AdapterPair::new(a.clone(), b.clone()).unwrap();
            loss_and_grad(&frozen, &p, scale, &x, &y).0
        };
        let mut worst: f64 = 0.0;
        for idx in 0..ga.len() {
            let mut ap = ad.a().clone();
            let mut am = ad.a().clone();
            ap[idx] += h;
            am[idx] -= h;
            let fd = (loss_at(&ap, ad.b()) - loss_at(&am, ad.b())) / (2.0 * h);
            worst = worst.max((fd - ga[idx]).abs() / fd.abs().max(ga[idx].abs()).max(1e-8));
        }
        for idx in 0..gb.len() {
            let mut bp = ad.b().clone();
            let mut bm = ad.b().clone();
            bp[idx] += h;
            bm[idx] -= h;
            let fd = (loss_at(ad.a(), &bp) - loss_at(ad.a(), &bm)) / (2.0 * h);
            worst = worst.max((fd - gb[idx]).abs() / fd.abs().max(gb[idx].abs()).max(1e-8));
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn training_keeps_backbone_frozen_and_reduces_full_batch_loss() {
        let cfg = TaskConfig { batch_size: 500, local_epochs: 10, ..TaskConfig::default() };
        let mut r = rng(12);
        let normal = Normal::new(0.0, cfg.base_std).unwrap();
        let model = GlobalModel::new(Matrix::from_fn(4, 32, |_, _| normal.sample(&mut r))).unwrap();
        let before = model.clone();
        let d = gen_mixture_data(500, 32, 4, 3.0, &mut r).unwrap();
        let (_, hist) = local_train_with_history(&model, &d, &cfg, &mut r).unwrap();
        assert_eq!(model, before);
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss went up: {hist:?}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TaskConfig { learning_rate: 1e6, local_epochs: 5, ..TaskConfig::default() };
        let model = GlobalModel::new(Matrix::zeros(4, 32)).unwrap();
        let d = gen_mixture_data(500, 32, 4, 3.0, &mut rng(13)).unwrap();
        let err = local_train(&model, &d, &cfg, &mut rng(14)).unwrap_err();
        assert!(matches!(err, SimError::Diverged(_)), "{err:?}");
    }

    #[test]
    fn evaluate_matches_naive_loop() {
        let mut r = rng(15);
        let w = Matrix::from_fn(3, 4, |_, _| StandardNormal.sample(&mut r));
        let d = gen_mixture_data(10, 4, 3, 1.0, &mut r).unwrap();
        let mut correct = 0;
        for i in 0..10 {
            let mut best = (0, f64::NEG_INFINITY);
            for c in 0..3 {
                let mut s = 0.0;
                for j in 0..4 {
                    s += w[(c, j)] * d.features[(i, j)];
                }
                if s > best.1 {
                    best = (c, s);
                }
            }
            if best.0 == d.labels[i] {
                correct += 1;
            }
        }
        let model = GlobalModel::new(w).unwrap();
        assert_eq!(evaluate(&model, &d), correct as f64 / 10.0);
    }

    #[test]
    fn sign_rule_is_perfect_on_separable_toy() {
        let d = Dataset {
            features: dmatrix![-2.0; -1.0; -0.5; 0.5; 1.0; 3.0],
            labels: vec![0, 0, 0, 1, 1, 1],
            n_classes: 2,
            split: Split::Test,
        };
        let model = GlobalModel::new(dmatrix![-1.0; 1.0]).unwrap();
        assert_eq!(evaluate(&model, &d), 1.0);
    }

    #[test]
    fn indistinguishable_classes_sit_at_chance() {
        let mut r = rng(16);
        let w = Matrix::from_fn(4, 16, |_, _| StandardNormal.sample(&mut r));
        let d = gen_mixture_data(4000, 16, 4, 0.0, &mut r).unwrap();
        let acc = accuracy_of(&w, &d);
        let sd = (0.25f64 * 0.75 / 4000.0).sqrt();
        assert!((acc - 0.25).abs() < 3.0 * sd + 0.02, "{acc}");
    }

    #[test]
    fn csv_roundtrip() {
        let d = gen_mixture_data(12, 5, 3, 1.0, &mut rng(17)).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), Split::Train).unwrap();
        assert_eq!(back, d);
        assert!(Dataset::read_csv("3,2\n".as_bytes(), Split::Train).is_err());
    }
}
