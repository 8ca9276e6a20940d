//! Class-conditional Gaussian scorer with a shared (pooled) covariance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ridge added to the pooled covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// `1e-3 * trace(cov) / D`.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianScorer<F> {
    dim: usize,
    class_ids: Vec<usize>,
    means: Vec<Vec<F>>,
    /// Row-major `D x D`, ridge included.
    covariance: Vec<F>,
    precision: Vec<F>,
    ridge: F,
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` if not positive definite.
pub(crate) fn cholesky<F: Scalar>(a: &[F], n: usize) -> Option<Vec<F>> {
    let mut l = vec![F::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                // pivots lost to cancellation count as zero
                let tol = F::epsilon() * F::lit(n as f64) * a[i * n + i].abs();
                if !(s > tol) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Inverse of `L L^T` given its Cholesky factor.
fn cholesky_inverse<F: Scalar>(l: &[F], n: usize) -> Vec<F> {
    let mut inv = vec![F::zero(); n * n];
    let mut col = vec![F::zero(); n];
    for c in 0..n {
        // L y = e_c
        for i in 0..n {
            let mut s = if i == c { F::one() } else { F::zero() };
            for k in 0..i {
                s = s - l[i * n + k] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s = s - l[k * n + i] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        for i in 0..n {
            inv[i * n + c] = col[i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let m = (inv[i * n + j] + inv[j * n + i]) * F::lit(0.5);
            inv[i * n + j] = m;
            inv[j * n + i] = m;
        }
    }
    inv
}

impl<F: Scalar> GaussianScorer<F> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn means(&self) -> &[Vec<F>] {
        &self.means
    }

    pub fn covariance(&self) -> &[F] {
        &self.covariance
    }

    pub fn ridge(&self) -> F {
        self.ridge
    }

    /// Squared Mahalanobis distance to the mean of the `idx`-th fitted class.
    pub fn squared_distance(&self, x: &[F], idx: usize) -> Result<F> {
        Error::check_dim(self.dim, x.len())?;
        let n = self.dim;
        let diff: Vec<F> = x
            .iter()
            .zip(&self.means[idx])
            .map(|(&a, &m)| a - m)
            .collect();
        let mut acc = F::zero();
        for i in 0..n {
            let row = &self.precision[i * n..(i + 1) * n];
            let pi = row
                .iter()
                .zip(&diff)
                .fold(F::zero(), |s, (&p, &d)| s + p * d);
            acc = acc + diff[i] * pi;
        }
        Ok(acc)
    }

    /// Closest class (as its original label) and its squared distance.
    pub fn nearest(&self, x: &[F]) -> Result<(usize, F)> {
        let mut best = (0, F::infinity());
        for idx in 0..self.means.len() {
            let d = self.squared_distance(x, idx)?;
            if d < best.1 {
                best = (idx, d);
            }
        }
        Ok((self.class_ids[best.0], best.1))
    }

    /// `-min_c d_M(x, mu_c)^2`; higher is more in-distribution.
    pub fn score(&self, x: &[F]) -> Result<F> {
        self.nearest(x).map(|(_, d)| -d)
    }
}

/// Fits class means and a pooled covariance, then inverts it through Cholesky.
pub fn fit_gaussian_scorer<F: Scalar>(
    xs: &[&[F]],
    labels: &[usize],
    ridge: Ridge,
) -> Result<GaussianScorer<F>> {
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
    if let Some((c, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::Training(format!(
            "class {c} has {} sample(s); at least 2 are required",
            g.len()
        )));
    }
    let mut class_ids = Vec::with_capacity(groups.len());
    let mut means = Vec::with_capacity(groups.len());
    let mut cov = vec![F::zero(); dim * dim];
    for (&c, rows) in &groups {
        let n = F::lit(rows.len() as f64);
        let mut mean = vec![F::zero(); dim];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r.iter()) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        for r in rows {
            let d: Vec<F> = r.iter().zip(&mean).map(|(&v, &m)| v - m).collect();
            for i in 0..dim {
                for j in 0..=i {
                    cov[i * dim + j] = cov[i * dim + j] + d[i] * d[j];
                }
            }
        }
        class_ids.push(c);
        means.push(mean);
    }
    let dof = xs.len() - groups.len();
    let dof = F::lit(dof.max(1) as f64);
    for i in 0..dim {
        for j in 0..=i {
            let v = cov[i * dim + j] / dof;
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }
    let rho = match ridge {
        Ridge::Auto => {
            let trace = (0..dim).fold(F::zero(), |a, i| a + cov[i * dim + i]);
            F::lit(1e-3) * trace / F::lit(dim as f64)
        }
        Ridge::Fixed(r) if r >= 0.0 && r.is_finite() => F::lit(r),
        Ridge::Fixed(r) => {
            return Err(Error::Config(format!(
                "ridge must be finite and >= 0, got {r}"
            )))
        }
    };
    for i in 0..dim {
        cov[i * dim + i] = cov[i * dim + i] + rho;
    }
    let l = cholesky(&cov, dim).ok_or_else(|| {
        Error::Numeric(
            "pooled covariance is singular or not positive definite; fit with a positive ridge"
                .into(),
        )
    })?;
    let precision = cholesky_inverse(&l, dim);
    Ok(GaussianScorer {
        dim,
        class_ids,
        means,
        covariance: cov,
        precision,
        ridge: rho,
    })
}
