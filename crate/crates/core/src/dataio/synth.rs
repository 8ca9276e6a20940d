//! Gaussian nested-world data.
//!
//! World `w` is an isotropic unit-variance Gaussian centred at `w * separation`
//! along the first axis. The innermost world is further split into `K` class
//! clusters spaced `class_separation` apart along the second axis and centred
//! on the world's own centre.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::hierarchy::{WorldHierarchy, WorldLabel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim: usize,
    /// Samples per world per split.
    pub per_world_count: usize,
    /// Distance between consecutive world centres, in standard deviations.
    pub separation: f64,
    pub known_class_count: usize,
    pub class_separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            dim: 16,
            per_world_count: 500,
            separation: 2.5,
            known_class_count: 4,
            class_separation: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.per_world_count == 0 || self.known_class_count == 0 {
            return Err(Error::Config(
                "dim, per_world_count and known_class_count must be at least 1".into(),
            ));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Config(format!(
                "separation must be finite and >= 0, got {}",
                self.separation
            )));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::Config(format!(
                "class_separation must be finite and >= 0, got {}",
                self.class_separation
            )));
        }
        if self.dim < 2 && self.known_class_count > 1 {
            return Err(Error::Config(
                "dim must be at least 2 to place known classes on their own axis".into(),
            ));
        }
        Ok(())
    }

    /// Centre of a world (and class, for the innermost world).
    pub fn center(&self, depth: usize, class_id: Option<usize>) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        c[0] = depth as f64 * self.separation;
        if let Some(k) = class_id {
            if self.dim > 1 {
                let mid = (self.known_class_count as f64 - 1.0) / 2.0;
                c[1] = (k as f64 - mid) * self.class_separation;
            }
        }
        c
    }
}

/// Five worlds (far, near, building, monument, known) with `k` generic class names.
pub fn default_hierarchy(k: usize) -> Result<WorldHierarchy> {
    WorldHierarchy::new(
        ["far", "near", "building", "monument", "known"],
        (0..k).map(|c| format!("class-{c}")),
    )
}

pub fn generate_synthetic<F: Scalar>(cfg: &SynthConfig, h: &WorldHierarchy) -> Result<Dataset<F>> {
    cfg.validate()?;
    if h.class_count() != cfg.known_class_count {
        return Err(Error::Config(format!(
            "hierarchy has {} classes but known_class_count is {}",
            h.class_count(),
            cfg.known_class_count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.known_class_count;
    let mut records = Vec::with_capacity(3 * h.world_count() * cfg.per_world_count);
    for split in Split::ALL {
        for depth in 0..h.world_count() {
            let innermost = depth == h.max_depth();
            for i in 0..cfg.per_world_count {
                let class_id = innermost.then_some(i % k);
                let center = cfg.center(depth, class_id);
                let features = center
                    .iter()
                    .map(|&m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        F::lit(m + z)
                    })
                    .collect();
                records.push(SampleRecord {
                    id: format!("{}-{}-{:05}", split, h.worlds()[depth], i),
                    features,
                    label: WorldLabel::new(h, depth, class_id)?,
                    split,
                });
            }
        }
    }
    Dataset::new(h.clone(), records)
}
