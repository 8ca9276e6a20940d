//! Per-dimension scaling weights from class-wise variance statistics.
//!
//! Each weight is a Fisher-style ratio: the variance of the per-class means
//! along a dimension divided by the average within-class variance along it.
//! Dimensions that do not separate classes are driven towards the floor, so a
//! downstream distance scorer effectively ignores them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceScaling<F> {
    weights: Vec<F>,
}

impl<F: Scalar> VarianceScaling<F> {
    pub fn from_weights(weights: Vec<F>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w > F::zero())) {
            return Err(Error::Config(
                "scaling weights must be finite and positive".into(),
            ));
        }
        Ok(VarianceScaling { weights })
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `x_d * w_d` for every dimension.
    pub fn apply(&self, x: &[F]) -> Result<Vec<F>> {
        Error::check_dim(self.dim(), x.len())?;
        Ok(x.iter().zip(&self.weights).map(|(&v, &w)| v * w).collect())
    }
}

pub fn fit_variance_scaling<F: Scalar>(
    xs: &[&[F]],
    labels: &[usize],
) -> Result<VarianceScaling<F>> {
    if xs.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            xs.len(),
            labels.len()
        )));
    }
    let dim = xs
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::Training("empty training set".into()))?;
    let mut groups: BTreeMap<usize, Vec<&[F]>> = BTreeMap::new();
    for (x, &y) in xs.iter().zip(labels) {
        Error::check_dim(dim, x.len())?;
        groups.entry(y).or_default().push(x);
    }
    if groups.len() < 2 {
        return Err(Error::Config(
            "variance scaling needs at least 2 classes".into(),
        ));
    }
    if groups.values().any(|g| g.len() < 2) {
        return Err(Error::Config(
            "variance scaling needs at least 2 samples per class".into(),
        ));
    }
    let c = F::lit(groups.len() as f64);
    let mut class_means = Vec::with_capacity(groups.len());
    let mut within = vec![F::zero(); dim];
    for rows in groups.values() {
        let n = F::lit(rows.len() as f64);
        let mut mean = vec![F::zero(); dim];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r.iter()) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        for d in 0..dim {
            let ss = rows
                .iter()
                .fold(F::zero(), |a, r| a + (r[d] - mean[d]) * (r[d] - mean[d]));
            within[d] = within[d] + ss / (n - F::one());
        }
        class_means.push(mean);
    }
    within.iter_mut().for_each(|w| *w = *w / c);
    let mean_within = within.iter().copied().sum::<F>() / F::lit(dim as f64);
    if !(mean_within > F::zero()) {
        return Err(Error::Config(
            "within-class variance is zero in every dimension".into(),
        ));
    }
    let eps = mean_within * F::lit(1e-9);
    let floor = F::lit(WEIGHT_FLOOR);
    let weights = (0..dim)
        .map(|d| {
            let grand = class_means.iter().fold(F::zero(), |a, m| a + m[d]) / c;
            let between = class_means
                .iter()
                .fold(F::zero(), |a, m| a + (m[d] - grand) * (m[d] - grand))
                / c;
            (between / within[d].max(eps)).max(floor)
        })
        .collect();
    VarianceScaling::from_weights(weights)
}
