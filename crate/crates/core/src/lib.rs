//! Cascades of binary out-of-distribution gates over feature vectors.
//!
//! A [`hierarchy::WorldHierarchy`] orders semantic worlds from the outermost
//! (arbitrary inputs) to the innermost (the known classes). Each consecutive
//! pair of worlds becomes one gate; the last gate is an outlier-exposure
//! softmax head scored by entropy. Samples flow through the gates in order
//! and are rejected at the first gate they fail.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cascade;
pub mod cli;
pub mod dataio;
pub mod detectors;
pub mod error;
pub mod hierarchy;
pub mod metrics;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = dataio::Dataset<f64>;
pub type SampleRecord = dataio::SampleRecord<f64>;
pub type LogisticGate = detectors::LogisticGate<f64>;
pub type SoftmaxHead = detectors::SoftmaxHead<f64>;
pub type GaussianScorer = detectors::GaussianScorer<f64>;
pub type VarianceScaling = detectors::VarianceScaling<f64>;
pub type KnnScorer = detectors::KnnScorer<f64>;
pub type GateScorer = detectors::GateScorer<f64>;
pub type ThresholdSpec = calibration::ThresholdSpec<f64>;
pub type ScoredSample = metrics::ScoredSample<f64>;
pub type Cascade = cascade::Cascade<f64>;
