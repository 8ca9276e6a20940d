//! Per-layer and end-to-end report rows, with JSON, CSV and text renderings.

use serde::{Deserialize, Serialize};

use super::confusion::{confusion, ConfusionMatrix, Metric};
use super::curves::{aupr, auroc, fpr_at_tpr, ScoredSample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scores, hard decisions and subgroup names for one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryEvaluation<F> {
    pub scored: Vec<ScoredSample<F>>,
    pub decisions: Vec<bool>,
    /// Subcategory of each sample (e.g. its world), used for accuracy breakdowns.
    pub groups: Vec<String>,
}

impl<F: Scalar> BinaryEvaluation<F> {
    pub fn len(&self) -> usize {
        self.scored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scored.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.scored.iter().map(|s| s.label).collect()
    }

    pub fn confusion(&self) -> Result<ConfusionMatrix> {
        confusion(&self.decisions, &self.labels())
    }

    fn check(&self) -> Result<()> {
        if self.decisions.len() != self.scored.len() || self.groups.len() != self.scored.len() {
            return Err(Error::Data("evaluation vectors differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerInput<F> {
    pub layer: usize,
    pub name: String,
    pub eval: BinaryEvaluation<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalInput<F> {
    pub name: String,
    pub eval: BinaryEvaluation<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: String,
    pub n: u64,
    pub accuracy: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: usize,
    pub name: String,
    /// False when no input was supplied for this layer.
    pub present: bool,
    pub n: u64,
    pub positives: u64,
    pub negatives: u64,
    pub confusion: ConfusionMatrix,
    pub accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub specificity: Metric,
    pub auroc: Metric,
    pub aupr: Metric,
    pub fpr95: Metric,
    pub breakdown: Vec<GroupAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRow {
    pub name: String,
    pub n: u64,
    pub confusion: ConfusionMatrix,
    pub accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub auroc: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: Option<u64>,
    pub layers: Vec<LayerRow>,
    pub global: Vec<GlobalRow>,
}

fn breakdown<F: Scalar>(eval: &BinaryEvaluation<F>) -> Vec<GroupAccuracy> {
    let mut order: Vec<(String, u64, u64)> = Vec::new();
    for ((g, s), &d) in eval.groups.iter().zip(&eval.scored).zip(&eval.decisions) {
        let idx = match order.iter().position(|(name, _, _)| name == g) {
            Some(i) => i,
            None => {
                order.push((g.clone(), 0, 0));
                order.len() - 1
            }
        };
        order[idx].1 += 1;
        if d == s.label {
            order[idx].2 += 1;
        }
    }
    order
        .into_iter()
        .map(|(group, n, correct)| GroupAccuracy {
            group,
            n,
            accuracy: Metric::ratio(correct, n),
        })
        .collect()
}

fn layer_row<F: Scalar>(
    layer: usize,
    name: &str,
    input: Option<&LayerInput<F>>,
) -> Result<LayerRow> {
    let Some(input) = input else {
        return Ok(LayerRow {
            layer,
            name: name.to_string(),
            present: false,
            n: 0,
            positives: 0,
            negatives: 0,
            confusion: ConfusionMatrix::default(),
            accuracy: Metric::undefined(),
            precision: Metric::undefined(),
            recall: Metric::undefined(),
            f1: Metric::undefined(),
            specificity: Metric::undefined(),
            auroc: Metric::undefined(),
            aupr: Metric::undefined(),
            fpr95: Metric::undefined(),
            breakdown: Vec::new(),
        });
    };
    input.eval.check()?;
    let cm = input.eval.confusion()?;
    Ok(LayerRow {
        layer,
        name: input.name.clone(),
        present: true,
        n: cm.total(),
        positives: cm.positives(),
        negatives: cm.negatives(),
        confusion: cm,
        accuracy: cm.accuracy(),
        precision: cm.precision(),
        recall: cm.recall(),
        f1: cm.f1(),
        specificity: cm.specificity(),
        auroc: auroc(&input.eval.scored),
        aupr: aupr(&input.eval.scored),
        fpr95: fpr_at_tpr(&input.eval.scored, 0.95),
        breakdown: breakdown(&input.eval),
    })
}

/// Builds one row per expected layer (absent layers are marked, not dropped)
/// followed by the end-to-end rows.
pub fn build_report<F: Scalar>(
    layer_names: &[String],
    layers: &[LayerInput<F>],
    globals: &[GlobalInput<F>],
    seed: Option<u64>,
) -> Result<MetricsReport> {
    let rows = layer_names
        .iter()
        .enumerate()
        .map(|(i, name)| layer_row(i, name, layers.iter().find(|l| l.layer == i)))
        .collect::<Result<Vec<_>>>()?;
    let global = globals
        .iter()
        .map(|g| {
            g.eval.check()?;
            let cm = g.eval.confusion()?;
            Ok(GlobalRow {
                name: g.name.clone(),
                n: cm.total(),
                confusion: cm,
                accuracy: cm.accuracy(),
                precision: cm.precision(),
                recall: cm.recall(),
                f1: cm.f1(),
                auroc: auroc(&g.eval.scored),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        seed,
        layers: rows,
        global,
    })
}

const LAYER_COLUMNS: [&str; 9] = [
    "Accuracy",
    "Precision",
    "Recall",
    "F1",
    "Specificity",
    "AUROC",
    "AUPR",
    "FPR95",
    "Undefined",
];

fn fmt_metric(m: &Metric) -> String {
    if m.undefined {
        "n/a".to_string()
    } else {
        format!("{:.4}", m.value)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl LayerRow {
    fn metrics(&self) -> [(&'static str, &Metric); 8] {
        [
            ("Accuracy", &self.accuracy),
            ("Precision", &self.precision),
            ("Recall", &self.recall),
            ("F1", &self.f1),
            ("Specificity", &self.specificity),
            ("AUROC", &self.auroc),
            ("AUPR", &self.aupr),
            ("FPR95", &self.fpr95),
        ]
    }
}

impl GlobalRow {
    fn metrics(&self) -> [(&'static str, &Metric); 5] {
        [
            ("Accuracy", &self.accuracy),
            ("Precision", &self.precision),
            ("Recall", &self.recall),
            ("F1", &self.f1),
            ("AUROC", &self.auroc),
        ]
    }
}

fn undefined_list<'a>(metrics: impl IntoIterator<Item = (&'static str, &'a Metric)>) -> String {
    let names: Vec<&str> = metrics
        .into_iter()
        .filter(|(_, m)| m.undefined)
        .map(|(n, _)| n)
        .collect();
    names.join(";")
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One CSV table: layer rows, then global rows (layer-only columns left empty).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("section,name,layer,present,n,positives,negatives,");
        out.push_str(&LAYER_COLUMNS.join(","));
        out.push('\n');
        for r in &self.layers {
            let values: Vec<String> = r
                .metrics()
                .iter()
                .map(|(_, m)| format!("{:?}", m.value))
                .collect();
            out.push_str(&format!(
                "layer,{},{},{},{},{},{},{},{}\n",
                csv_field(&r.name),
                r.layer,
                r.present,
                r.n,
                r.positives,
                r.negatives,
                values.join(","),
                undefined_list(r.metrics()),
            ));
        }
        for g in &self.global {
            let m = g.metrics();
            out.push_str(&format!(
                "global,{},,true,{},{},{},{:?},{:?},{:?},{:?},,{:?},,,{}\n",
                csv_field(&g.name),
                g.n,
                g.confusion.positives(),
                g.confusion.negatives(),
                m[0].1.value,
                m[1].1.value,
                m[2].1.value,
                m[3].1.value,
                m[4].1.value,
                undefined_list(m),
            ));
        }
        out
    }

    /// Human-readable aligned tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header = ["Layer", "Name", "N", "Pos", "Neg"];
        let mut rows: Vec<Vec<String>> = Vec::new();
        for r in &self.layers {
            let mut row = vec![
                r.layer.to_string(),
                if r.present {
                    r.name.clone()
                } else {
                    format!("{} (absent)", r.name)
                },
                r.n.to_string(),
                r.positives.to_string(),
                r.negatives.to_string(),
            ];
            row.extend(r.metrics().iter().map(|(_, m)| fmt_metric(m)));
            rows.push(row);
        }
        let mut head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        head.extend(LAYER_COLUMNS[..8].iter().map(|s| s.to_string()));
        out.push_str(&render(&head, &rows));
        for r in self.layers.iter().filter(|r| !r.breakdown.is_empty()) {
            let parts: Vec<String> = r
                .breakdown
                .iter()
                .map(|b| format!("{} {} (n={})", b.group, fmt_metric(&b.accuracy), b.n))
                .collect();
            out.push_str(&format!(
                "  layer {} accuracy by group: {}\n",
                r.layer,
                parts.join(", ")
            ));
        }
        out.push('\n');
        let head: Vec<String> = [
            "Pipeline",
            "N",
            "Accuracy",
            "Precision",
            "Recall",
            "F1",
            "AUROC",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let rows: Vec<Vec<String>> = self
            .global
            .iter()
            .map(|g| {
                let mut row = vec![g.name.clone(), g.n.to_string()];
                row.extend(g.metrics().iter().map(|(_, m)| fmt_metric(m)));
                row
            })
            .collect();
        out.push_str(&render(&head, &rows));
        out
    }
}

fn render(head: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = head.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        format!("{}\n", parts.join("  ").trim_end())
    };
    let mut out = line(head);
    out.push_str(&line(
        &widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>(),
    ));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}
