//! Decision-threshold selection for gates.
//!
//! Two procedures are provided: an exhaustive F1 sweep over all distinct
//! confusion matrices, and a nearest-rank percentile of in-distribution scores.
//! Both record the split they were computed on so evaluation can refuse
//! thresholds fitted on test data.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataio::Split;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Accept when `score >= threshold`.
    AcceptHigh,
    /// Accept when `score <= threshold`.
    AcceptLow,
}

impl Polarity {
    pub fn flipped(self) -> Self {
        match self {
            Polarity::AcceptHigh => Polarity::AcceptLow,
            Polarity::AcceptLow => Polarity::AcceptHigh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CalibrationMethod {
    F1Max,
    Percentile { q: f64 },
}

/// A calibrated cut with its orientation and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec<F: Scalar> {
    #[serde(serialize_with = "ser_cut", deserialize_with = "de_cut")]
    pub value: F,
    pub polarity: Polarity,
    #[serde(flatten)]
    pub method: CalibrationMethod,
    pub source_split: Split,
    /// Raised when the calibration scores were all identical.
    #[serde(default)]
    pub degenerate: bool,
}

// Sentinel cuts are infinite; JSON has no infinity, so they travel as strings.
fn ser_cut<F: Scalar, S: Serializer>(v: &F, s: S) -> std::result::Result<S::Ok, S::Error> {
    let x = v.as_f64();
    if x.is_finite() {
        s.serialize_f64(x)
    } else if x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn de_cut<'de, F: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<F, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => {
            F::from_f64(x).ok_or_else(|| serde::de::Error::custom("threshold out of range"))
        }
        Raw::Str(s) if s == "inf" => Ok(F::infinity()),
        Raw::Str(s) if s == "-inf" => Ok(F::neg_infinity()),
        Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid threshold '{s}'"))),
    }
}

impl<F: Scalar> ThresholdSpec<F> {
    pub fn accepts(&self, score: F) -> bool {
        match self.polarity {
            Polarity::AcceptHigh => score >= self.value,
            Polarity::AcceptLow => score <= self.value,
        }
    }

    /// Moves the cut by `amount >= 0` towards accepting fewer scores.
    pub fn tightened(&self, amount: F) -> Self {
        let mut t = self.clone();
        t.value = match self.polarity {
            Polarity::AcceptHigh => self.value + amount,
            Polarity::AcceptLow => self.value - amount,
        };
        t
    }

    /// Errors when the threshold was fitted on test data.
    pub fn check_provenance(&self) -> Result<()> {
        if self.source_split == Split::Test {
            return Err(Error::Config(
                "threshold was calibrated on the test split; recalibrate on validation data".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    #[serde(flatten)]
    pub method: CalibrationMethod,
    pub source_split: Split,
    pub n_positive: usize,
    pub n_negative: usize,
    /// F1 reached on the calibration set (F1 sweep only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub achieved_f1: Option<f64>,
    /// Fraction of calibration scores accepted by the cut.
    pub accepted_fraction: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated<F: Scalar> {
    pub threshold: ThresholdSpec<F>,
    pub summary: CalibrationSummary,
}

fn f1_parts(tp: u64, fp: u64, fn_: u64) -> (u128, u128) {
    (2 * tp as u128, (2 * tp + fp + fn_) as u128)
}

/// Exhaustive F1 sweep.
///
/// Candidate cuts are `-inf`, the midpoints between consecutive distinct
/// scores, and `+inf`. Among cuts with the maximal F1 the one accepting the
/// fewest samples wins.
pub fn calibrate_f1max<F: Scalar>(
    scores: &[F],
    labels: &[bool],
    polarity: Polarity,
    source_split: Split,
) -> Result<Calibrated<F>> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("calibration scores must be finite".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(
            "F1 calibration needs both positive and negative samples".into(),
        ));
    }
    // work in accept-high orientation
    let sign = match polarity {
        Polarity::AcceptHigh => F::one(),
        Polarity::AcceptLow => -F::one(),
    };
    let mut pairs: Vec<(F, bool)> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (s * sign, y))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));

    // groups of tied scores, ascending, with (positives, negatives) per group
    let mut groups: Vec<(F, u64, u64)> = Vec::new();
    for &(s, y) in &pairs {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if y {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((s, y as u64, (!y) as u64)),
        }
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    let m = groups.len();
    // candidate i rejects groups[..i]: i = m is "+inf" (accept none), i = 0 is "-inf" (accept all)
    let mut rejected_pos = vec![0u64; m + 1];
    let mut rejected_neg = vec![0u64; m + 1];
    for i in 0..m {
        rejected_pos[i + 1] = rejected_pos[i] + groups[i].1;
        rejected_neg[i + 1] = rejected_neg[i] + groups[i].2;
    }
    let mut best_i = m;
    let mut best = f1_parts(0, 0, p);
    for i in (0..m).rev() {
        let tp = p - rejected_pos[i];
        let fp = n - rejected_neg[i];
        let cand = f1_parts(tp, fp, rejected_pos[i]);
        if cand.0 * best.1 > best.0 * cand.1 {
            best = cand;
            best_i = i;
        }
    }
    let cut = if best_i == 0 {
        F::neg_infinity()
    } else if best_i == m {
        F::infinity()
    } else {
        let lo = groups[best_i - 1].0;
        let hi = groups[best_i].0;
        let mid = (lo + hi) / F::lit(2.0);
        if mid > lo {
            mid
        } else {
            hi
        }
    };
    let tp = p - rejected_pos[best_i];
    let fp = n - rejected_neg[best_i];
    let degenerate = m == 1;
    let method = CalibrationMethod::F1Max;
    Ok(Calibrated {
        threshold: ThresholdSpec {
            value: cut * sign,
            polarity,
            method,
            source_split,
            degenerate,
        },
        summary: CalibrationSummary {
            method,
            source_split,
            n_positive: n_pos,
            n_negative: n_neg,
            achieved_f1: Some(best.0 as f64 / best.1 as f64),
            accepted_fraction: (tp + fp) as f64 / (p + n) as f64,
            degenerate,
        },
    })
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(q/100 * n)` of the ascending scores.
pub fn nearest_rank<F: Scalar>(scores: &[F], q: f64) -> Result<F> {
    if scores.is_empty() {
        return Err(Error::Data("percentile of an empty score set".into()));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::Config(format!(
            "percentile must lie in (0, 100], got {q}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("calibration scores must be finite".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    let rank = ((q * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Percentile calibration on in-distribution scores (e.g. entropies with [`Polarity::AcceptLow`]).
pub fn calibrate_percentile<F: Scalar>(
    id_scores: &[F],
    q: f64,
    polarity: Polarity,
    source_split: Split,
) -> Result<Calibrated<F>> {
    let value = nearest_rank(id_scores, q)?;
    let degenerate = id_scores.iter().all(|&s| s == id_scores[0]);
    let threshold = ThresholdSpec {
        value,
        polarity,
        method: CalibrationMethod::Percentile { q },
        source_split,
        degenerate,
    };
    let accepted = id_scores.iter().filter(|&&s| threshold.accepts(s)).count();
    Ok(Calibrated {
        summary: CalibrationSummary {
            method: threshold.method,
            source_split,
            n_positive: id_scores.len(),
            n_negative: 0,
            achieved_f1: None,
            accepted_fraction: accepted as f64 / id_scores.len() as f64,
            degenerate,
        },
        threshold,
    })
}
