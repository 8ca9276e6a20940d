//! Threshold-free metrics over scored samples.
//!
//! Scores may carry the `Min` sentinel, which ranks below every finite value
//! and ties with other sentinels. All sweeps accept a sample when its score is
//! at or above the threshold.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::confusion::Metric;
use crate::scalar::Scalar;

/// A finite score or the sentinel that sorts below all of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankScore<F> {
    Min,
    Value(F),
}

impl<F: Scalar> RankScore<F> {
    pub fn is_min(&self) -> bool {
        matches!(self, RankScore::Min)
    }

    pub fn value(&self) -> Option<F> {
        match self {
            RankScore::Min => None,
            RankScore::Value(v) => Some(*v),
        }
    }

    /// Total order: `Min` < every finite value; finite values by magnitude.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (RankScore::Min, RankScore::Min) => Ordering::Equal,
            (RankScore::Min, _) => Ordering::Less,
            (_, RankScore::Min) => Ordering::Greater,
            (RankScore::Value(a), RankScore::Value(b)) => {
                a.partial_cmp(b).expect("scores must not be NaN")
            }
        }
    }

    pub fn map(self, f: impl Fn(F) -> F) -> Self {
        match self {
            RankScore::Min => RankScore::Min,
            RankScore::Value(v) => RankScore::Value(f(v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample<F> {
    pub score: RankScore<F>,
    pub label: bool,
}

impl<F: Scalar> ScoredSample<F> {
    pub fn new(score: F, label: bool) -> Self {
        ScoredSample {
            score: RankScore::Value(score),
            label,
        }
    }

    pub fn min(label: bool) -> Self {
        ScoredSample {
            score: RankScore::Min,
            label,
        }
    }
}

fn class_counts<F>(samples: &[ScoredSample<F>]) -> (u64, u64) {
    let pos = samples.iter().filter(|s| s.label).count() as u64;
    (pos, samples.len() as u64 - pos)
}

/// Samples sorted by descending score, chunked into runs of tied scores,
/// reported as cumulative `(tp, fp)` after each run.
fn descending_sweep<F: Scalar>(samples: &[ScoredSample<F>]) -> Vec<(u64, u64)> {
    let mut sorted: Vec<&ScoredSample<F>> = samples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score.total_cmp(&sorted[i].score) == Ordering::Equal {
            if sorted[j].label {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        out.push((tp, fp));
        i = j;
    }
    out
}

/// Area under the ROC curve by the rank-sum (Mann-Whitney) statistic; ties count one half.
pub fn auroc<F: Scalar>(samples: &[ScoredSample<F>]) -> Metric {
    let (pos, neg) = class_counts(samples);
    if pos == 0 || neg == 0 {
        return Metric::undefined();
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].score.total_cmp(&samples[b].score));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len()
            && samples[order[j]].score.total_cmp(&samples[order[i]].score) == Ordering::Equal
        {
            j += 1;
        }
        // 1-based ranks i+1..=j share their average
        let avg = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| samples[k].label).count();
        rank_sum += avg * tied_pos as f64;
        i = j;
    }
    let p = pos as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Metric::defined(u / (p * neg as f64))
}

/// ROC points `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one per distinct score.
pub fn roc_curve<F: Scalar>(samples: &[ScoredSample<F>]) -> Vec<(f64, f64)> {
    let (pos, neg) = class_counts(samples);
    let mut pts = vec![(0.0, 0.0)];
    if pos == 0 || neg == 0 {
        return pts;
    }
    for (tp, fp) in descending_sweep(samples) {
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    pts
}

/// Trapezoidal integration of [`roc_curve`]; agrees with [`auroc`].
pub fn auroc_trapezoid<F: Scalar>(samples: &[ScoredSample<F>]) -> Metric {
    let (pos, neg) = class_counts(samples);
    if pos == 0 || neg == 0 {
        return Metric::undefined();
    }
    let pts = roc_curve(samples);
    let area = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Metric::defined(area)
}

/// Step-wise area under precision-recall: `Σ (R_i - R_{i-1}) P_i` over the descending sweep.
pub fn aupr<F: Scalar>(samples: &[ScoredSample<F>]) -> Metric {
    let (pos, _) = class_counts(samples);
    if pos == 0 {
        return Metric::undefined();
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (tp, fp) in descending_sweep(samples) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Metric::defined(area)
}

/// Smallest false-positive rate over thresholds whose true-positive rate reaches `target`.
pub fn fpr_at_tpr<F: Scalar>(samples: &[ScoredSample<F>], target: f64) -> Metric {
    let (pos, neg) = class_counts(samples);
    if pos == 0 || neg == 0 {
        return Metric::undefined();
    }
    let mut best = 1.0f64;
    for (tp, fp) in descending_sweep(samples) {
        let tpr = tp as f64 / pos as f64;
        if tpr >= target {
            best = best.min(fp as f64 / neg as f64);
        }
    }
    Metric::defined(best)
}
