//! Sample records, manifests, synthetic nested-world data and embedding curation.

mod curation;
mod manifest;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{WorldHierarchy, WorldLabel};
use crate::scalar::Scalar;

pub use curation::{
    curation_filter, load_embedding_file, load_prompt_file, CurationConfig, CurationOutcome,
    PromptBank,
};
pub use manifest::{load_manifest, load_manifests, read_manifest, write_manifest, ManifestRow};
pub use synth::{default_hierarchy, generate_synthetic, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord<F> {
    pub id: String,
    pub features: Vec<F>,
    pub label: WorldLabel,
    pub split: Split,
}

/// Records sharing one feature dimension, labelled against one hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    hierarchy: WorldHierarchy,
    dim: usize,
    records: Vec<SampleRecord<F>>,
}

impl<F: Scalar> Dataset<F> {
    /// Validates dimension consistency, finiteness and id uniqueness.
    pub fn new(hierarchy: WorldHierarchy, records: Vec<SampleRecord<F>>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.features.len());
        let mut ids = std::collections::HashSet::with_capacity(records.len());
        for r in &records {
            Error::check_dim(dim, r.features.len())?;
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "record '{}' has non-finite features",
                    r.id
                )));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Data(format!("duplicate record id '{}'", r.id)));
            }
            WorldLabel::new(&hierarchy, r.label.depth(), r.label.class_id())?;
        }
        Ok(Dataset {
            hierarchy,
            dim,
            records,
        })
    }

    pub fn hierarchy(&self) -> &WorldHierarchy {
        &self.hierarchy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[SampleRecord<F>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord<F>> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Copy restricted to one split.
    pub fn only(&self, split: Split) -> Dataset<F> {
        Dataset {
            hierarchy: self.hierarchy.clone(),
            dim: self.dim,
            records: self.split(split).cloned().collect(),
        }
    }

    pub fn into_records(self) -> Vec<SampleRecord<F>> {
        self.records
    }
}
