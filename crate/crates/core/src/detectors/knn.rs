use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};

/// Exact k-nearest-neighbour scorer over a stored reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnScorer<F> {
    k: usize,
    dim: usize,
    reference: Vec<Vec<F>>,
}

impl<F: Scalar> KnnScorer<F> {
    pub fn fit(reference: Vec<Vec<F>>, k: usize) -> Result<Self> {
        let dim = reference
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Training("k-NN needs a non-empty reference set".into()))?;
        if k == 0 || k > reference.len() {
            return Err(Error::Config(format!(
                "k must lie in 1..={}, got {k}",
                reference.len()
            )));
        }
        for r in &reference {
            Error::check_dim(dim, r.len())?;
        }
        Ok(KnnScorer { k, dim, reference })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    /// Negative Euclidean distance to the k-th nearest reference point.
    pub fn score(&self, x: &[F]) -> Result<F> {
        Error::check_dim(self.dim, x.len())?;
        let mut d: Vec<(F, usize)> = self
            .reference
            .iter()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, x), i))
            .collect();
        // ties keep reference order
        let (_, kth, _) = d.select_nth_unstable_by(self.k - 1, |a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        Ok(-kth.0.sqrt())
    }
}

pub fn knn_score<F: Scalar>(train: &[Vec<F>], x: &[F], k: usize) -> Result<F> {
    KnnScorer::fit(train.to_vec(), k)?.score(x)
}
