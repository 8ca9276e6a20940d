//! Linear softmax head, outlier-exposure training and entropy scoring.
//!
//! The training objective is mean cross-entropy on labelled in-distribution
//! rows plus `lambda` times the mean `KL(softmax(f(x)) || Uniform(1/K))` over
//! auxiliary outlier rows. Entropy and KL use the natural logarithm.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use crate::error::{Error, Result};
use crate::scalar::{dot, log_sum_exp, Scalar};

/// `K` linear logits over `D` features; weights are row-major `K x D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxHead<F> {
    classes: usize,
    dim: usize,
    weights: Vec<F>,
    bias: Vec<F>,
}

impl<F: Scalar> SoftmaxHead<F> {
    pub fn new(classes: usize, dim: usize, weights: Vec<F>, bias: Vec<F>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "softmax head needs K >= 2, got {classes}"
            )));
        }
        Error::check_dim(classes * dim, weights.len())?;
        Error::check_dim(classes, bias.len())?;
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite head parameters".into()));
        }
        Ok(SoftmaxHead {
            classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn zeros(classes: usize, dim: usize) -> Result<Self> {
        Self::new(
            classes,
            dim,
            vec![F::zero(); classes * dim],
            vec![F::zero(); classes],
        )
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn bias(&self) -> &[F] {
        &self.bias
    }

    fn row(&self, c: usize) -> &[F] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    pub fn logits(&self, x: &[F]) -> Result<Vec<F>> {
        Error::check_dim(self.dim, x.len())?;
        Ok((0..self.classes)
            .map(|c| dot(self.row(c), x) + self.bias[c])
            .collect())
    }

    pub fn probabilities(&self, x: &[F]) -> Result<Vec<F>> {
        self.logits(x).map(|z| softmax(&z))
    }

    pub fn predict(&self, x: &[F]) -> Result<usize> {
        let z = self.logits(x)?;
        Ok(argmax(&z))
    }

    /// Shannon entropy of the predicted distribution, in `[0, ln K]`.
    pub fn entropy_score(&self, x: &[F]) -> Result<F> {
        self.logits(x).map(|z| entropy_of_logits(&z))
    }

    /// Negative free energy `ln Σ exp(z_c)`; higher means more in-distribution.
    pub fn energy_score(&self, x: &[F]) -> Result<F> {
        self.logits(x).map(|z| log_sum_exp(&z))
    }
}

pub fn entropy_score<F: Scalar>(head: &SoftmaxHead<F>, x: &[F]) -> Result<F> {
    head.entropy_score(x)
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<F: Scalar>(z: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Max-subtracted softmax.
pub fn softmax<F: Scalar>(z: &[F]) -> Vec<F> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

fn entropy_of_logits<F: Scalar>(z: &[F]) -> F {
    let lse = log_sum_exp(z);
    let h = z.iter().fold(F::zero(), |acc, &v| {
        let lp = v - lse;
        let p = lp.exp();
        if p > F::zero() {
            acc - p * lp
        } else {
            acc
        }
    });
    let ln_k = F::lit(z.len() as f64).ln();
    h.max(F::zero()).min(ln_k)
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy<F: Scalar>(probs: &[F]) -> F {
    probs.iter().fold(F::zero(), |acc, &p| {
        if p > F::zero() {
            acc - p * p.ln()
        } else {
            acc
        }
    })
}

/// Clamps every entry to at least `floor` and renormalises.
pub fn clamp_to_simplex<F: Scalar>(probs: &[F], floor: F) -> Vec<F> {
    let clamped: Vec<F> = probs.iter().map(|&p| p.max(floor)).collect();
    let total: F = clamped.iter().copied().sum();
    clamped.into_iter().map(|p| p / total).collect()
}

/// `KL(p || Uniform(1/K))` after clamping `p` at `floor`; equals `ln K - H(p)`.
pub fn kl_to_uniform<F: Scalar>(probs: &[F], classes: usize, floor: F) -> Result<F> {
    Error::check_dim(classes, probs.len())?;
    let p = clamp_to_simplex(probs, floor);
    let ln_k = F::lit(classes as f64).ln();
    let neg_h = p.iter().fold(F::zero(), |acc, &v| acc + v * v.ln());
    Ok((ln_k + neg_h).max(F::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OEConfig {
    /// Weight of the outlier-exposure term.
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Rows per batch; 0 means full batch.
    pub batch_size: usize,
    pub prob_floor: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for OEConfig {
    fn default() -> Self {
        OEConfig {
            lambda: 0.5,
            learning_rate: 0.5,
            epochs: 300,
            batch_size: 0,
            prob_floor: 1e-7,
            seed: 7,
            standardize: true,
        }
    }
}

impl OEConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0 / classes as f64) {
            return Err(Error::Config(format!(
                "prob_floor must lie in (0, 1/K), got {}",
                self.prob_floor
            )));
        }
        Ok(())
    }
}

/// Objective value and gradient with respect to every head parameter.
#[derive(Debug, Clone)]
pub struct HeadLoss<F> {
    pub total: F,
    pub cross_entropy: F,
    pub outlier_exposure: F,
    pub grad_weights: Vec<F>,
    pub grad_bias: Vec<F>,
}

fn add_outer<F: Scalar>(grad_w: &mut [F], grad_b: &mut [F], dz: &[F], x: &[F], dim: usize) {
    for (c, &d) in dz.iter().enumerate() {
        grad_b[c] = grad_b[c] + d;
        for (g, &v) in grad_w[c * dim..(c + 1) * dim].iter_mut().zip(x) {
            *g = *g + d * v;
        }
    }
}

fn ce_loss_grad<F: Scalar>(
    head: &SoftmaxHead<F>,
    xs: &[&[F]],
    labels: &[usize],
) -> Result<(F, Vec<F>, Vec<F>)> {
    let (k, d) = (head.classes, head.dim);
    let mut gw = vec![F::zero(); k * d];
    let mut gb = vec![F::zero(); k];
    let mut loss = F::zero();
    for (x, &y) in xs.iter().zip(labels) {
        let z = head.logits(x)?;
        let lse = log_sum_exp(&z);
        loss = loss + lse - z[y];
        let mut dz: Vec<F> = z.iter().map(|&v| (v - lse).exp()).collect();
        dz[y] = dz[y] - F::one();
        add_outer(&mut gw, &mut gb, &dz, x, d);
    }
    let n = F::lit(xs.len().max(1) as f64);
    gw.iter_mut().chain(gb.iter_mut()).for_each(|g| *g = *g / n);
    Ok((loss / n, gw, gb))
}

fn kl_loss_grad<F: Scalar>(
    head: &SoftmaxHead<F>,
    xs: &[&[F]],
    floor: F,
) -> Result<(F, Vec<F>, Vec<F>)> {
    let (k, d) = (head.classes, head.dim);
    let mut gw = vec![F::zero(); k * d];
    let mut gb = vec![F::zero(); k];
    let mut loss = F::zero();
    for x in xs {
        let z = head.logits(x)?;
        let lse = log_sum_exp(&z);
        let logp: Vec<F> = z.iter().map(|&v| v - lse).collect();
        let p: Vec<F> = logp.iter().map(|&l| l.exp()).collect();
        loss = loss + kl_to_uniform(&p, k, floor)?;
        // d/dz_j Σ p ln p = p_j (ln p_j - Σ p ln p); exact while no entry sits at the floor
        let plogp = p
            .iter()
            .zip(&logp)
            .fold(F::zero(), |a, (&pi, &li)| a + pi * li);
        let dz: Vec<F> = p
            .iter()
            .zip(&logp)
            .map(|(&pi, &li)| pi * (li - plogp))
            .collect();
        add_outer(&mut gw, &mut gb, &dz, x, d);
    }
    let n = F::lit(xs.len().max(1) as f64);
    gw.iter_mut().chain(gb.iter_mut()).for_each(|g| *g = *g / n);
    Ok((loss / n, gw, gb))
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Data(format!(
            "{rows} rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!(
            "class label {bad} outside 0..{classes}"
        )));
    }
    Ok(())
}

/// Mixed objective `CE(id) + lambda * mean KL(ood || uniform)` and its gradient.
pub fn oe_loss_grad<F: Scalar>(
    head: &SoftmaxHead<F>,
    id: &[&[F]],
    labels: &[usize],
    ood: &[&[F]],
    lambda: F,
    floor: F,
) -> Result<HeadLoss<F>> {
    check_labels(labels, id.len(), head.classes)?;
    let (ce, mut gw, mut gb) = ce_loss_grad(head, id, labels)?;
    let mut oe = F::zero();
    let mut total = ce;
    if lambda > F::zero() && !ood.is_empty() {
        let (kl, kw, kb) = kl_loss_grad(head, ood, floor)?;
        oe = kl;
        total = total + lambda * kl;
        for (g, k) in gw.iter_mut().zip(kw).chain(gb.iter_mut().zip(kb)) {
            *g = *g + lambda * k;
        }
    }
    Ok(HeadLoss {
        total,
        cross_entropy: ce,
        outlier_exposure: oe,
        grad_weights: gw,
        grad_bias: gb,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedHead<F> {
    pub head: SoftmaxHead<F>,
    /// Mean batch objective per epoch.
    pub loss_history: Vec<F>,
}

fn batch_order(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let size = if batch_size == 0 {
        n.max(1)
    } else {
        batch_size
    };
    idx.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Head and ID rows mapped into standardised coordinates.
struct Prepared<F> {
    std: Standardizer<F>,
    head: SoftmaxHead<F>,
    id: Vec<Vec<F>>,
}

fn prepare<F: Scalar>(
    init: &SoftmaxHead<F>,
    id: &[&[F]],
    labels: &[usize],
    extra: &[&[F]],
    cfg: &OEConfig,
) -> Result<Prepared<F>> {
    cfg.validate(init.classes)?;
    if id.is_empty() {
        return Err(Error::Training("empty in-distribution training set".into()));
    }
    check_labels(labels, id.len(), init.classes)?;
    for x in id {
        Error::check_dim(init.dim, x.len())?;
    }
    for x in extra {
        Error::check_dim(init.dim, x.len())?;
    }
    // outliers take part in the scaling so their coordinates stay moderate
    let std = if cfg.standardize {
        let all: Vec<&[F]> = id.iter().chain(extra).copied().collect();
        Standardizer::fit(&all, init.dim)
    } else {
        Standardizer::identity(init.dim)
    };
    let mut w = Vec::with_capacity(init.weights.len());
    let mut b = Vec::with_capacity(init.classes);
    for c in 0..init.classes {
        let (wc, bc) = std.fold(init.row(c), init.bias[c]);
        w.extend(wc);
        b.push(bc);
    }
    Ok(Prepared {
        head: SoftmaxHead::new(init.classes, init.dim, w, b)?,
        id: id.iter().map(|x| std.apply(x)).collect(),
        std,
    })
}

fn finish<F: Scalar>(
    std: &Standardizer<F>,
    head: SoftmaxHead<F>,
    history: Vec<F>,
) -> Result<TrainedHead<F>> {
    let mut w = Vec::with_capacity(head.weights.len());
    let mut b = Vec::with_capacity(head.classes);
    for c in 0..head.classes {
        let (wc, bc) = std.unfold(head.row(c), head.bias[c]);
        w.extend(wc);
        b.push(bc);
    }
    let head = SoftmaxHead::new(head.classes, head.dim, w, b)
        .map_err(|_| Error::Numeric("head training diverged; lower the learning rate".into()))?;
    Ok(TrainedHead {
        head,
        loss_history: history,
    })
}

fn descend<F: Scalar>(head: &mut SoftmaxHead<F>, lr: F, gw: &[F], gb: &[F]) {
    for (w, &g) in head.weights.iter_mut().zip(gw) {
        *w = *w - lr * g;
    }
    for (b, &g) in head.bias.iter_mut().zip(gb) {
        *b = *b - lr * g;
    }
}

/// Outlier-exposure fine-tuning.
///
/// Each step pairs the next in-distribution batch with the next outlier batch
/// (outlier batches cycle when there are fewer of them). Batch order is
/// reshuffled every epoch from two independent seeded streams, so the
/// in-distribution order does not depend on the outlier set.
pub fn train_oe<F: Scalar>(
    init: &SoftmaxHead<F>,
    id: &[&[F]],
    labels: &[usize],
    ood: &[&[F]],
    cfg: &OEConfig,
) -> Result<TrainedHead<F>> {
    if cfg.lambda > 0.0 && ood.is_empty() {
        return Err(Error::Config(
            "lambda > 0 requires a non-empty outlier set".into(),
        ));
    }
    let use_ood = cfg.lambda > 0.0;
    let scaling_rows = if use_ood { ood } else { &[] };
    let Prepared { std, mut head, id } = prepare(init, id, labels, scaling_rows, cfg)?;
    let ood: Vec<Vec<F>> = if use_ood {
        ood.iter().map(|x| std.apply(x)).collect()
    } else {
        Vec::new()
    };
    let lambda = F::lit(cfg.lambda);
    let floor = F::lit(cfg.prob_floor);
    let lr = F::lit(cfg.learning_rate);
    let mut id_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ood_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let id_batches = batch_order(id.len(), cfg.batch_size, &mut id_rng);
        let ood_batches = if use_ood {
            batch_order(ood.len(), cfg.batch_size, &mut ood_rng)
        } else {
            Vec::new()
        };
        let mut epoch_loss = F::zero();
        for (step, batch) in id_batches.iter().enumerate() {
            let xs: Vec<&[F]> = batch.iter().map(|&i| id[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let outliers: Vec<&[F]> = if use_ood {
                ood_batches[step % ood_batches.len()]
                    .iter()
                    .map(|&i| ood[i].as_slice())
                    .collect()
            } else {
                Vec::new()
            };
            let l = oe_loss_grad(&head, &xs, &ys, &outliers, lambda, floor)?;
            epoch_loss = epoch_loss + l.total;
            descend(&mut head, lr, &l.grad_weights, &l.grad_bias);
        }
        history.push(epoch_loss / F::lit(id_batches.len() as f64));
    }
    finish(&std, head, history)
}

/// Plain cross-entropy training with the same batching and stepping as [`train_oe`].
pub fn train_cross_entropy<F: Scalar>(
    init: &SoftmaxHead<F>,
    id: &[&[F]],
    labels: &[usize],
    cfg: &OEConfig,
) -> Result<TrainedHead<F>> {
    let Prepared { std, mut head, id } = prepare(init, id, labels, &[], cfg)?;
    let lr = F::lit(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let batches = batch_order(id.len(), cfg.batch_size, &mut rng);
        let mut epoch_loss = F::zero();
        for batch in &batches {
            let xs: Vec<&[F]> = batch.iter().map(|&i| id[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, gw, gb) = ce_loss_grad(&head, &xs, &ys)?;
            epoch_loss = epoch_loss + loss;
            descend(&mut head, lr, &gw, &gb);
        }
        history.push(epoch_loss / F::lit(batches.len() as f64));
    }
    finish(&std, head, history)
}
