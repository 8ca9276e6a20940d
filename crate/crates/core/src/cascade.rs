//! Routing samples through the ordered gates and evaluating the result.
//!
//! Structural gates run first, in layer order, and a sample stops at the first
//! gate it fails. Samples that clear every structural gate reach the final
//! softmax head: its argmax is the predicted class and its entropy decides
//! acceptance. The end-to-end acceptance score is `-entropy` for samples that
//! reached the head and the `Min` sentinel for samples rejected upstream.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Polarity, ThresholdSpec};
use crate::dataio::{SampleRecord, Split};
use crate::detectors::{GateScorer, OEConfig, Scorer, SoftmaxHead};
use crate::error::{Error, Result};
use crate::hierarchy::WorldHierarchy;
use crate::metrics::{BinaryEvaluation, LayerInput, RankScore, ScoredSample};
use crate::scalar::Scalar;

/// One structural gate: a scorer, its calibrated threshold and its position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: serde::de::DeserializeOwned"
))]
pub struct GateDetector<F: Scalar, S = GateScorer<F>> {
    pub layer_index: usize,
    pub name: String,
    pub scorer: S,
    /// `None` until calibrated.
    pub threshold: Option<ThresholdSpec<F>>,
}

/// The innermost gate: a softmax head whose entropy decides acceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FinalGate<F: Scalar> {
    pub layer_index: usize,
    pub name: String,
    pub head: SoftmaxHead<F>,
    /// Entropy cut; accepted side is low entropy.
    pub threshold: Option<ThresholdSpec<F>>,
    /// Training settings recorded alongside the parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<OEConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cascade<F: Scalar, S = GateScorer<F>> {
    gates: Vec<GateDetector<F, S>>,
    head: FinalGate<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome<F> {
    pub layer: usize,
    pub score: F,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeVerdict<F> {
    pub id: String,
    pub split: Split,
    /// Outcomes of the gates that were evaluated, in order.
    pub per_gate: Vec<GateOutcome<F>>,
    pub rejection_layer: Option<usize>,
    pub accepted: bool,
    pub predicted_class: Option<usize>,
    pub acceptance_score: RankScore<F>,
}

/// JSON Lines form of a verdict; the sentinel score is `null` plus `acceptance_min: true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub id: String,
    pub split: Split,
    pub per_gate: Vec<GateOutcome<f64>>,
    pub rejection_layer: Option<usize>,
    pub accepted: bool,
    pub predicted_class: Option<String>,
    pub acceptance_score: Option<f64>,
    pub acceptance_min: bool,
}

impl<F: Scalar> CascadeVerdict<F> {
    pub fn to_row(&self, h: &WorldHierarchy) -> VerdictRow {
        VerdictRow {
            id: self.id.clone(),
            split: self.split,
            per_gate: self
                .per_gate
                .iter()
                .map(|g| GateOutcome {
                    layer: g.layer,
                    score: g.score.as_f64(),
                    passed: g.passed,
                })
                .collect(),
            rejection_layer: self.rejection_layer,
            accepted: self.accepted,
            predicted_class: self.predicted_class.map(|c| h.classes()[c].clone()),
            acceptance_score: self.acceptance_score.value().map(Scalar::as_f64),
            acceptance_min: self.acceptance_score.is_min(),
        }
    }
}

fn require<F: Scalar>(t: &Option<ThresholdSpec<F>>, layer: usize) -> Result<&ThresholdSpec<F>> {
    let t = t
        .as_ref()
        .ok_or_else(|| Error::Config(format!("gate {layer} has no calibrated threshold")))?;
    t.check_provenance()?;
    Ok(t)
}

impl<F: Scalar, S: Scorer<F>> Cascade<F, S> {
    /// Checks layer ordering, dimensions and that every gate carries a threshold.
    pub fn new(gates: Vec<GateDetector<F, S>>, head: FinalGate<F>) -> Result<Self> {
        for (i, g) in gates.iter().enumerate() {
            if g.layer_index != i {
                return Err(Error::Config(format!(
                    "gate at position {i} has layer index {}",
                    g.layer_index
                )));
            }
            Error::check_dim(head.head.dim(), g.scorer.dim())?;
            require(&g.threshold, i)?;
        }
        if head.layer_index != gates.len() {
            return Err(Error::Config(format!(
                "final gate has layer index {} but follows {} gates",
                head.layer_index,
                gates.len()
            )));
        }
        require(&head.threshold, head.layer_index)?;
        Ok(Cascade { gates, head })
    }

    pub fn gates(&self) -> &[GateDetector<F, S>] {
        &self.gates
    }

    pub fn head(&self) -> &FinalGate<F> {
        &self.head
    }

    pub fn dim(&self) -> usize {
        self.head.head.dim()
    }

    pub fn layer_count(&self) -> usize {
        self.gates.len() + 1
    }

    /// Replaces the threshold of layer `layer` (the final gate is `gates().len()`).
    pub fn set_threshold(&mut self, layer: usize, t: ThresholdSpec<F>) -> Result<()> {
        t.check_provenance()?;
        if layer < self.gates.len() {
            self.gates[layer].threshold = Some(t);
        } else if layer == self.gates.len() {
            self.head.threshold = Some(t);
        } else {
            return Err(Error::Config(format!("no layer {layer}")));
        }
        Ok(())
    }

    pub fn threshold(&self, layer: usize) -> Option<&ThresholdSpec<F>> {
        if layer < self.gates.len() {
            self.gates[layer].threshold.as_ref()
        } else {
            self.head
                .threshold
                .as_ref()
                .filter(|_| layer == self.gates.len())
        }
    }

    fn final_threshold(&self) -> &ThresholdSpec<F> {
        self.head.threshold.as_ref().expect("validated in new")
    }

    /// Routes one feature vector through the cascade.
    pub fn infer(&self, id: &str, split: Split, x: &[F]) -> Result<CascadeVerdict<F>> {
        Error::check_dim(self.dim(), x.len())?;
        let mut per_gate = Vec::with_capacity(self.layer_count());
        for g in &self.gates {
            let score = g.scorer.score(x)?;
            let passed = g
                .threshold
                .as_ref()
                .expect("validated in new")
                .accepts(score);
            per_gate.push(GateOutcome {
                layer: g.layer_index,
                score,
                passed,
            });
            if !passed {
                return Ok(CascadeVerdict {
                    id: id.to_string(),
                    split,
                    per_gate,
                    rejection_layer: Some(g.layer_index),
                    accepted: false,
                    predicted_class: None,
                    acceptance_score: RankScore::Min,
                });
            }
        }
        let logits = self.head.head.logits(x)?;
        let entropy = self.head.head.entropy_score(x)?;
        let passed = self.final_threshold().accepts(entropy);
        per_gate.push(GateOutcome {
            layer: self.head.layer_index,
            score: entropy,
            passed,
        });
        Ok(CascadeVerdict {
            id: id.to_string(),
            split,
            per_gate,
            rejection_layer: (!passed).then_some(self.head.layer_index),
            accepted: passed,
            predicted_class: passed.then(|| crate::detectors::argmax(&logits)),
            acceptance_score: RankScore::Value(-entropy),
        })
    }
}

pub fn cascade_infer<F: Scalar, S: Scorer<F>>(
    cascade: &Cascade<F, S>,
    record: &SampleRecord<F>,
) -> Result<CascadeVerdict<F>> {
    cascade
        .infer(&record.id, record.split, &record.features)
        .map_err(|e| Error::Sample {
            id: record.id.clone(),
            source: Box::new(e),
        })
}

fn require_test<F>(records: &[SampleRecord<F>]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| r.split != Split::Test) {
        return Err(Error::Data(format!(
            "evaluation only reads the test split; record '{}' is in '{}'",
            r.id, r.split
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CascadeEvaluation<F> {
    pub verdicts: Vec<CascadeVerdict<F>>,
    /// Positive = innermost-world sample; decision = accepted.
    pub end_to_end: BinaryEvaluation<F>,
}

/// Runs every test record through the cascade. Verdicts keep input order.
pub fn evaluate_cascade<F, S>(
    cascade: &Cascade<F, S>,
    h: &WorldHierarchy,
    records: &[SampleRecord<F>],
) -> Result<CascadeEvaluation<F>>
where
    F: Scalar,
    S: Scorer<F> + Sync,
{
    require_test(records)?;
    let verdicts = records
        .par_iter()
        .map(|r| cascade_infer(cascade, r))
        .collect::<Result<Vec<_>>>()?;
    let max = h.max_depth();
    let end_to_end = BinaryEvaluation {
        scored: verdicts
            .iter()
            .zip(records)
            .map(|(v, r)| ScoredSample {
                score: v.acceptance_score,
                label: r.label.depth() == max,
            })
            .collect(),
        decisions: verdicts.iter().map(|v| v.accepted).collect(),
        groups: records
            .iter()
            .map(|r| h.worlds()[r.label.depth()].clone())
            .collect(),
    };
    Ok(CascadeEvaluation {
        verdicts,
        end_to_end,
    })
}

/// Gate-local evaluation with ground-truth routing.
///
/// Layer `l` sees the samples whose true depth is at least `l`; the positives
/// are those that belong deeper. Structural scores are oriented so that
/// higher means accept; the final layer uses `-entropy`.
pub fn per_layer_evaluate<F, S>(
    cascade: &Cascade<F, S>,
    h: &WorldHierarchy,
    records: &[SampleRecord<F>],
) -> Result<Vec<LayerInput<F>>>
where
    F: Scalar,
    S: Scorer<F> + Sync,
{
    require_test(records)?;
    if h.layer_count() != cascade.layer_count() {
        return Err(Error::Config(format!(
            "hierarchy has {} layers but the cascade has {}",
            h.layer_count(),
            cascade.layer_count()
        )));
    }
    let mut out = Vec::with_capacity(cascade.layer_count());
    for layer in 0..cascade.layer_count() {
        let population: Vec<&SampleRecord<F>> = records
            .iter()
            .filter(|r| r.label.depth() >= layer)
            .collect();
        let threshold = cascade.threshold(layer).expect("validated in new");
        let scored = population
            .par_iter()
            .map(|r| -> Result<(F, bool)> {
                let x = &r.features;
                let raw = if layer < cascade.gates.len() {
                    cascade.gates[layer].scorer.score(x)
                } else {
                    cascade.head.head.entropy_score(x)
                }
                .map_err(|e| Error::Sample {
                    id: r.id.clone(),
                    source: Box::new(e),
                })?;
                let oriented = match threshold.polarity {
                    Polarity::AcceptHigh => raw,
                    Polarity::AcceptLow => -raw,
                };
                Ok((oriented, threshold.accepts(raw)))
            })
            .collect::<Result<Vec<_>>>()?;
        let name = if layer < cascade.gates.len() {
            cascade.gates[layer].name.clone()
        } else {
            cascade.head.name.clone()
        };
        out.push(LayerInput {
            layer,
            name,
            eval: BinaryEvaluation {
                scored: population
                    .iter()
                    .zip(&scored)
                    .map(|(r, &(s, _))| ScoredSample::new(s, r.label.depth() > layer))
                    .collect(),
                decisions: scored.iter().map(|&(_, d)| d).collect(),
                groups: population
                    .iter()
                    .map(|r| h.worlds()[r.label.depth()].clone())
                    .collect(),
            },
        });
    }
    Ok(out)
}

/// Single-stage comparison: the final head's entropy rule applied to every test sample.
pub fn flat_baseline<F: Scalar>(
    head: &FinalGate<F>,
    h: &WorldHierarchy,
    records: &[SampleRecord<F>],
) -> Result<BinaryEvaluation<F>> {
    require_test(records)?;
    let threshold = require(&head.threshold, head.layer_index)?;
    let entropies = records
        .par_iter()
        .map(|r| head.head.entropy_score(&r.features))
        .collect::<Result<Vec<F>>>()?;
    let max = h.max_depth();
    Ok(BinaryEvaluation {
        scored: entropies
            .iter()
            .zip(records)
            .map(|(&e, r)| ScoredSample::new(-e, r.label.depth() == max))
            .collect(),
        decisions: entropies.iter().map(|&e| threshold.accepts(e)).collect(),
        groups: records
            .iter()
            .map(|r| h.worlds()[r.label.depth()].clone())
            .collect(),
    })
}
