//! Multi-prompt cosine filtering over precomputed embeddings.
//!
//! Both image and prompt embeddings are normalised to unit length before the
//! cosine is taken; an item is kept when its best prompt match reaches `tau`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

fn normalized<F: Scalar>(v: &[F]) -> Option<Vec<F>> {
    let norm = dot(v, v).sqrt();
    if !(norm > F::zero()) || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| x / norm).collect())
}

/// Prompt embeddings for one concept plus the acceptance threshold.
#[derive(Debug, Clone)]
pub struct CurationConfig<F> {
    prompts: Vec<Vec<F>>,
    tau: F,
}

impl<F: Scalar> CurationConfig<F> {
    pub fn new(prompts: Vec<Vec<F>>, tau: F) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::Config("curation needs at least one prompt".into()));
        }
        if !(tau >= -F::one() && tau <= F::one()) {
            return Err(Error::Config(format!("tau must lie in [-1, 1], got {tau}")));
        }
        let dim = prompts[0].len();
        let mut unit = Vec::with_capacity(prompts.len());
        for p in &prompts {
            Error::check_dim(dim, p.len())?;
            unit.push(normalized(p).ok_or_else(|| {
                Error::Config("prompt embedding has zero or non-finite norm".into())
            })?);
        }
        Ok(CurationConfig { prompts: unit, tau })
    }

    pub fn tau(&self) -> F {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.prompts[0].len()
    }

    /// Maximum cosine similarity over prompts.
    pub fn match_score(&self, embedding: &[F]) -> Result<F> {
        Error::check_dim(self.dim(), embedding.len())?;
        let unit = normalized(embedding)
            .ok_or_else(|| Error::Data("embedding has zero or non-finite norm".into()))?;
        Ok(self
            .prompts
            .iter()
            .map(|p| dot(p, &unit))
            .fold(F::neg_infinity(), F::max))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationOutcome {
    pub accepted: Vec<String>,
    /// The unmatched pool.
    pub rejected: Vec<String>,
}

/// Splits `(id, embedding)` items into accepted and unmatched, preserving input order.
pub fn curation_filter<F: Scalar>(
    items: &[(String, Vec<F>)],
    cfg: &CurationConfig<F>,
) -> Result<CurationOutcome> {
    let mut out = CurationOutcome::default();
    for (id, emb) in items {
        if cfg.match_score(emb)? >= cfg.tau {
            out.accepted.push(id.clone());
        } else {
            out.rejected.push(id.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptRow {
    concept: String,
    embedding: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingRow {
    id: String,
    embedding: Vec<f64>,
}

/// Prompt embeddings grouped by concept name.
#[derive(Debug, Clone, Default)]
pub struct PromptBank<F> {
    pub concepts: BTreeMap<String, Vec<Vec<F>>>,
}

impl<F: Scalar> PromptBank<F> {
    pub fn config_for(&self, concept: &str, tau: F) -> Result<CurationConfig<F>> {
        let prompts = self
            .concepts
            .get(concept)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no prompts for concept '{concept}'")))?;
        CurationConfig::new(prompts, tau)
    }
}

/// Parses a JSON Lines file of `(key, embedding)` rows, skipping blank lines.
fn read_rows<F: Scalar, R: serde::de::DeserializeOwned>(
    path: &Path,
    split: impl Fn(R) -> (String, Vec<f64>),
) -> Result<Vec<(String, Vec<F>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let fail = |message: String| Error::Load {
            path: path.display().to_string(),
            line: idx + 1,
            message,
        };
        let line = line.map_err(|e| fail(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: R = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let (key, raw) = split(row);
        let emb = raw
            .iter()
            .map(|&v| F::from_f64(v).filter(|x| x.is_finite()))
            .collect::<Option<Vec<F>>>()
            .ok_or_else(|| fail("non-finite embedding value".into()))?;
        out.push((key, emb));
    }
    Ok(out)
}

/// Reads a JSON Lines file of `{"concept": str, "embedding": [..]}` rows.
pub fn load_prompt_file<F: Scalar>(path: &Path) -> Result<PromptBank<F>> {
    let mut bank = PromptBank {
        concepts: BTreeMap::new(),
    };
    for (concept, emb) in read_rows(path, |r: PromptRow| (r.concept, r.embedding))? {
        bank.concepts.entry(concept).or_default().push(emb);
    }
    Ok(bank)
}

/// Reads a JSON Lines file of `{"id": str, "embedding": [..]}` rows, in file order.
pub fn load_embedding_file<F: Scalar>(path: &Path) -> Result<Vec<(String, Vec<F>)>> {
    read_rows(path, |r: EmbeddingRow| (r.id, r.embedding))
}
