//! Binary logistic gates trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticGate<F> {
    pub weights: Vec<F>,
    pub bias: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Optimise in per-dimension standardised coordinates.
    pub standardize: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-4,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedLogistic<F> {
    pub gate: LogisticGate<F>,
    /// Objective value before each epoch and after the last one.
    pub loss_history: Vec<F>,
}

#[inline]
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus<F: Scalar>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

impl<F: Scalar> LogisticGate<F> {
    pub fn zeros(dim: usize) -> Self {
        LogisticGate {
            weights: vec![F::zero(); dim],
            bias: F::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn affine(&self, x: &[F]) -> Result<F> {
        Error::check_dim(self.dim(), x.len())?;
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// Probability of the positive (pass) side.
    pub fn score(&self, x: &[F]) -> Result<F> {
        self.affine(x).map(sigmoid)
    }
}

pub fn gate_score<F: Scalar>(g: &LogisticGate<F>, x: &[F]) -> Result<F> {
    g.score(x)
}

/// Mean binary cross-entropy plus `l2/2 * |w|^2`, and its gradient `(dw, db)`.
pub fn logistic_loss_grad<F: Scalar>(
    gate: &LogisticGate<F>,
    xs: &[&[F]],
    labels: &[bool],
    l2: F,
) -> Result<(F, Vec<F>, F)> {
    if xs.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            xs.len(),
            labels.len()
        )));
    }
    let n = F::lit(xs.len().max(1) as f64);
    let mut loss = F::zero();
    let mut gw = vec![F::zero(); gate.dim()];
    let mut gb = F::zero();
    for (x, &y) in xs.iter().zip(labels) {
        let z = gate.affine(x)?;
        let y = if y { F::one() } else { F::zero() };
        loss = loss + softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, &v) in gw.iter_mut().zip(x.iter()) {
            *g = *g + r * v;
        }
        gb = gb + r;
    }
    let half = F::lit(0.5);
    let reg = gate.weights.iter().fold(F::zero(), |a, &w| a + w * w);
    let loss = loss / n + half * l2 * reg;
    for (g, &w) in gw.iter_mut().zip(&gate.weights) {
        *g = *g / n + l2 * w;
    }
    Ok((loss, gw, gb / n))
}

/// Fits a gate by full-batch gradient descent on L2-regularised cross-entropy.
///
/// The L2 term is applied as an implicit (proximal) step, so arbitrarily large
/// penalties shrink the weights towards zero instead of diverging. Fixed points
/// are those of the explicit gradient.
pub fn train_logistic<F: Scalar>(
    xs: &[&[F]],
    labels: &[bool],
    cfg: &LogisticConfig,
) -> Result<TrainedLogistic<F>> {
    let dim = xs
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::Training("empty training set".into()))?;
    if !(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y)) {
        return Err(Error::Training(
            "logistic gate needs both positive and negative samples".into(),
        ));
    }
    if !(cfg.learning_rate > 0.0) || !(cfg.l2 >= 0.0) {
        return Err(Error::Config(
            "learning_rate must be > 0 and l2 >= 0".into(),
        ));
    }
    for x in xs {
        Error::check_dim(dim, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite training features".into()));
        }
    }
    let std = if cfg.standardize {
        Standardizer::fit(xs, dim)
    } else {
        Standardizer::identity(dim)
    };
    let owned: Vec<Vec<F>> = xs.iter().map(|x| std.apply(x)).collect();
    let rows: Vec<&[F]> = owned.iter().map(Vec::as_slice).collect();

    let lr = F::lit(cfg.learning_rate);
    let l2 = F::lit(cfg.l2);
    let shrink = F::one() / (F::one() + lr * l2);
    let mut gate = LogisticGate::zeros(dim);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        // data gradient only; the penalty enters through `shrink`
        let (loss, gw, gb) = logistic_loss_grad(&gate, &rows, labels, F::zero())?;
        let reg = gate.weights.iter().fold(F::zero(), |a, &w| a + w * w);
        history.push(loss + F::lit(0.5) * l2 * reg);
        for (w, g) in gate.weights.iter_mut().zip(gw) {
            *w = (*w - lr * g) * shrink;
        }
        gate.bias = gate.bias - lr * gb;
    }
    history.push(logistic_loss_grad(&gate, &rows, labels, l2)?.0);
    if gate.weights.iter().any(|w| !w.is_finite()) || !gate.bias.is_finite() {
        return Err(Error::Numeric(
            "logistic training diverged; lower the learning rate".into(),
        ));
    }
    let (weights, bias) = std.unfold(&gate.weights, gate.bias);
    Ok(TrainedLogistic {
        gate: LogisticGate { weights, bias },
        loss_history: history,
    })
}
