use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A metric value plus a flag raised when its denominator was zero.
///
/// Undefined metrics carry `value == 0.0` so tables stay numeric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub undefined: bool,
}

impl Metric {
    pub fn defined(value: f64) -> Self {
        Metric {
            value,
            undefined: false,
        }
    }

    pub fn undefined() -> Self {
        Metric {
            value: 0.0,
            undefined: true,
        }
    }

    pub fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric::undefined()
        } else {
            Metric::defined(num as f64 / den as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Counts with `true` as the positive class.
pub fn confusion(decisions: &[bool], labels: &[bool]) -> Result<ConfusionMatrix> {
    if decisions.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} decisions but {} labels",
            decisions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&d, &y) in decisions.iter().zip(labels) {
        match (d, y) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn accuracy(&self) -> Metric {
        Metric::ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Metric {
        Metric::ratio(self.tn, self.tn + self.fp)
    }

    pub fn false_positive_rate(&self) -> Metric {
        Metric::ratio(self.fp, self.tn + self.fp)
    }

    /// `2PR / (P + R)`, undefined when either input is or when both are zero.
    pub fn f1(&self) -> Metric {
        let (p, r) = (self.precision(), self.recall());
        if p.undefined || r.undefined || p.value + r.value == 0.0 {
            return Metric::undefined();
        }
        Metric::defined(2.0 * p.value * r.value / (p.value + r.value))
    }
}
