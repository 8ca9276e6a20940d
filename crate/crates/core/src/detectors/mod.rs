//! Trainable scorers backing each gate of the cascade.
//!
//! Every scorer is oriented so that a higher score means "more likely to belong
//! to the accepted (inner) side"; calibration attaches the threshold.

mod gaussian;
mod knn;
mod logistic;
mod softmax;
mod standardize;
mod variance;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use gaussian::{fit_gaussian_scorer, GaussianScorer, Ridge};
pub use knn::{knn_score, KnnScorer};
pub use logistic::{
    gate_score, logistic_loss_grad, sigmoid, train_logistic, LogisticConfig, LogisticGate,
    TrainedLogistic,
};
pub use softmax::{
    argmax, clamp_to_simplex, entropy, entropy_score, kl_to_uniform, oe_loss_grad, softmax,
    train_cross_entropy, train_oe, HeadLoss, OEConfig, SoftmaxHead, TrainedHead,
};
pub use variance::{fit_variance_scaling, VarianceScaling, WEIGHT_FLOOR};

/// Anything that maps a feature vector to a real score.
pub trait Scorer<F> {
    fn dim(&self) -> usize;
    fn score(&self, x: &[F]) -> Result<F>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScoreModel<F> {
    Logistic(LogisticGate<F>),
    Mahalanobis(GaussianScorer<F>),
    Knn(KnnScorer<F>),
    /// Negative free energy of a softmax head.
    Energy(SoftmaxHead<F>),
}

/// A score model with optional per-dimension scaling applied to its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateScorer<F> {
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub scaling: Option<VarianceScaling<F>>,
    pub model: ScoreModel<F>,
}

impl<F: Scalar> Scorer<F> for GateScorer<F> {
    fn dim(&self) -> usize {
        match &self.model {
            ScoreModel::Logistic(g) => g.dim(),
            ScoreModel::Mahalanobis(g) => g.dim(),
            ScoreModel::Knn(k) => k.dim(),
            ScoreModel::Energy(h) => h.dim(),
        }
    }

    fn score(&self, x: &[F]) -> Result<F> {
        let scaled;
        let x = match &self.scaling {
            Some(s) => {
                scaled = s.apply(x)?;
                scaled.as_slice()
            }
            None => x,
        };
        match &self.model {
            ScoreModel::Logistic(g) => g.score(x),
            ScoreModel::Mahalanobis(g) => g.score(x),
            ScoreModel::Knn(k) => k.score(x),
            ScoreModel::Energy(h) => h.energy_score(x),
        }
    }
}

/// How to build the scorer for one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    /// Discriminative gate trained on both sides.
    Logistic(LogisticConfig),
    /// Fitted on the accepted side only, one Gaussian per fine class.
    Mahalanobis {
        #[serde(default)]
        ridge: Ridge,
        #[serde(default)]
        scaled: bool,
    },
    /// Fitted on the accepted side only.
    Knn {
        k: usize,
        #[serde(default)]
        scaled: bool,
    },
    /// Softmax head over fine classes of the accepted side, scored by energy.
    Energy {
        #[serde(default)]
        train: OEConfig,
    },
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec::Logistic(LogisticConfig::default())
    }
}

impl DetectorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorSpec::Logistic(_) => "logistic",
            DetectorSpec::Mahalanobis { .. } => "mahalanobis",
            DetectorSpec::Knn { .. } => "knn",
            DetectorSpec::Energy { .. } => "energy",
        }
    }

    /// Trains a scorer from a gate's population.
    ///
    /// `accept[i]` marks rows on the inner side; `fine[i]` is a finer class
    /// label used by the one-sided detectors (ignored for rows with `accept[i] == false`).
    pub fn fit<F: Scalar>(
        &self,
        xs: &[&[F]],
        accept: &[bool],
        fine: &[usize],
    ) -> Result<GateScorer<F>> {
        if xs.len() != accept.len() || xs.len() != fine.len() {
            return Err(Error::Data(
                "rows, labels and fine labels differ in length".into(),
            ));
        }
        let inner: Vec<&[F]> = xs
            .iter()
            .zip(accept)
            .filter(|(_, &a)| a)
            .map(|(x, _)| *x)
            .collect();
        let inner_fine: Vec<usize> = fine
            .iter()
            .zip(accept)
            .filter(|(_, &a)| a)
            .map(|(f, _)| *f)
            .collect();
        let scaling_for = |scaled: bool| -> Result<Option<VarianceScaling<F>>> {
            if scaled {
                fit_variance_scaling(&inner, &inner_fine).map(Some)
            } else {
                Ok(None)
            }
        };
        let apply = |s: &Option<VarianceScaling<F>>| -> Result<Vec<Vec<F>>> {
            inner
                .iter()
                .map(|x| match s {
                    Some(s) => s.apply(x),
                    None => Ok(x.to_vec()),
                })
                .collect()
        };
        match self {
            DetectorSpec::Logistic(cfg) => {
                let t = train_logistic(xs, accept, cfg)?;
                Ok(GateScorer {
                    scaling: None,
                    model: ScoreModel::Logistic(t.gate),
                })
            }
            DetectorSpec::Mahalanobis { ridge, scaled } => {
                let scaling = scaling_for(*scaled)?;
                let rows = apply(&scaling)?;
                let refs: Vec<&[F]> = rows.iter().map(Vec::as_slice).collect();
                let g = fit_gaussian_scorer(&refs, &inner_fine, *ridge)?;
                Ok(GateScorer {
                    scaling,
                    model: ScoreModel::Mahalanobis(g),
                })
            }
            DetectorSpec::Knn { k, scaled } => {
                let scaling = scaling_for(*scaled)?;
                let rows = apply(&scaling)?;
                Ok(GateScorer {
                    scaling,
                    model: ScoreModel::Knn(KnnScorer::fit(rows, *k)?),
                })
            }
            DetectorSpec::Energy { train } => {
                let mut ids: Vec<usize> = inner_fine.clone();
                ids.sort_unstable();
                ids.dedup();
                let dense: Vec<usize> = inner_fine
                    .iter()
                    .map(|f| ids.binary_search(f).expect("present"))
                    .collect();
                let dim = inner.first().map_or(0, |x| x.len());
                let init = SoftmaxHead::zeros(ids.len(), dim)?;
                let t = train_cross_entropy(&init, &inner, &dense, train)?;
                Ok(GateScorer {
                    scaling: None,
                    model: ScoreModel::Energy(t.head),
                })
            }
        }
    }
}
