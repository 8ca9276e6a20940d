use crate::scalar::Scalar;

/// Per-dimension affine map `(x - mean) / scale` fitted on training rows.
///
/// Trainers optimise in standardised coordinates and fold the map back into
/// the returned parameters, so callers always see raw-feature models.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer<F> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![F::zero(); dim],
            scale: vec![F::one(); dim],
        }
    }

    pub fn fit(rows: &[&[F]], dim: usize) -> Self {
        if rows.is_empty() {
            return Self::identity(dim);
        }
        let n = F::lit(rows.len() as f64);
        let mut mean = vec![F::zero(); dim];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r.iter()) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![F::zero(); dim];
        for r in rows {
            for ((s, &v), &m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > F::epsilon() {
                    sd
                } else {
                    F::one()
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    /// Raw-space weights/bias for a linear function given in standardised space.
    pub fn unfold(&self, w_std: &[F], b_std: F) -> (Vec<F>, F) {
        let w: Vec<F> = w_std
            .iter()
            .zip(&self.scale)
            .map(|(&w, &s)| w / s)
            .collect();
        let shift = w
            .iter()
            .zip(&self.mean)
            .fold(F::zero(), |acc, (&w, &m)| acc + w * m);
        (w, b_std - shift)
    }

    /// Standardised-space weights/bias for a linear function given in raw space.
    pub fn fold(&self, w: &[F], b: F) -> (Vec<F>, F) {
        let shift = w
            .iter()
            .zip(&self.mean)
            .fold(F::zero(), |acc, (&w, &m)| acc + w * m);
        let w_std = w.iter().zip(&self.scale).map(|(&w, &s)| w * s).collect();
        (w_std, b + shift)
    }
}
