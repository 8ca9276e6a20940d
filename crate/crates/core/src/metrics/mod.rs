//! Confusion-matrix metrics, ROC/PR curve metrics and report assembly.

mod confusion;
mod curves;
mod report;

pub use confusion::{confusion, ConfusionMatrix, Metric};
pub use curves::{aupr, auroc, auroc_trapezoid, fpr_at_tpr, roc_curve, RankScore, ScoredSample};
pub use report::{
    build_report, BinaryEvaluation, GlobalInput, GlobalRow, GroupAccuracy, LayerInput, LayerRow,
    MetricsReport,
};
