//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationMethod;
use crate::dataio::{default_hierarchy, Split, SynthConfig};
use crate::detectors::{DetectorSpec, OEConfig};
use crate::error::{Error, Result};
use crate::hierarchy::WorldHierarchy;

use super::files::read_json;

/// Where samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated by `synth` into the output directory.
    Synth(SynthConfig),
    /// Existing manifests; each file may hold any mix of splits.
    Manifests {
        train: PathBuf,
        val: PathBuf,
        test: PathBuf,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth(SynthConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationPlan {
    /// One method per structural gate; F1 maximisation when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gates: Option<Vec<CalibrationMethod>>,
    /// Percentile of in-distribution validation entropies used by the final gate.
    pub percentile: f64,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        CalibrationPlan {
            gates: None,
            percentile: 95.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: overrides the synthetic-data and head-training seeds.
    pub seed: u64,
    /// Hierarchy file; synthetic runs fall back to the built-in five worlds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<PathBuf>,
    pub data: DataSource,
    /// One detector per structural gate; defaults apply when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gates: Option<Vec<DetectorSpec>>,
    pub head: OEConfig,
    pub calibration: CalibrationPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            hierarchy: None,
            data: DataSource::default(),
            gates: None,
            head: OEConfig::default(),
            calibration: CalibrationPlan::default(),
        }
    }
}

/// Default gate detectors: a discriminative logistic gate per structural split.
pub fn default_gate_specs(structural_gates: usize) -> Vec<DetectorSpec> {
    vec![DetectorSpec::default(); structural_gates]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn synth_config(&self) -> Option<SynthConfig> {
        match &self.data {
            DataSource::Synth(s) => Some(SynthConfig {
                seed: self.seed,
                ..s.clone()
            }),
            DataSource::Manifests { .. } => None,
        }
    }

    pub fn head_config(&self) -> OEConfig {
        OEConfig {
            seed: self.seed,
            ..self.head
        }
    }

    pub fn hierarchy(&self) -> Result<WorldHierarchy> {
        match (&self.hierarchy, &self.data) {
            (Some(path), _) => read_json(path),
            (None, DataSource::Synth(s)) => default_hierarchy(s.known_class_count),
            (None, DataSource::Manifests { .. }) => Err(Error::Config(
                "manifest data needs a hierarchy file (\"hierarchy\" in the run config)".into(),
            )),
        }
    }

    pub fn gate_specs(&self, h: &WorldHierarchy) -> Result<Vec<DetectorSpec>> {
        let n = h.layer_count() - 1;
        match &self.gates {
            None => Ok(default_gate_specs(n)),
            Some(specs) if specs.len() == n => Ok(specs.clone()),
            Some(specs) => Err(Error::Config(format!(
                "hierarchy has {n} structural gates but {} detectors are configured",
                specs.len()
            ))),
        }
    }

    pub fn gate_methods(&self, h: &WorldHierarchy) -> Result<Vec<CalibrationMethod>> {
        let n = h.layer_count() - 1;
        match &self.calibration.gates {
            None => Ok(vec![CalibrationMethod::F1Max; n]),
            Some(m) if m.len() == n => Ok(m.clone()),
            Some(m) => Err(Error::Config(format!(
                "hierarchy has {n} structural gates but {} calibration methods are configured",
                m.len()
            ))),
        }
    }

    /// Manifest holding `split`; synthetic runs read what `synth` wrote under `out`.
    pub fn manifest_path(&self, out: &Path, split: Split) -> PathBuf {
        match &self.data {
            DataSource::Synth(_) => out.join(format!("{split}.jsonl")),
            DataSource::Manifests { train, val, test } => match split {
                Split::Train => train.clone(),
                Split::Val => val.clone(),
                Split::Test => test.clone(),
            },
        }
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<WorldHierarchy> {
        let h = self.hierarchy()?;
        if let Some(s) = self.synth_config() {
            s.validate()?;
            if s.known_class_count != h.class_count() {
                return Err(Error::Config(format!(
                    "hierarchy has {} classes but known_class_count is {}",
                    h.class_count(),
                    s.known_class_count
                )));
            }
        }
        self.gate_specs(&h)?;
        self.gate_methods(&h)?;
        self.head_config().validate(h.class_count())?;
        let q = self.calibration.percentile;
        if !(q > 0.0 && q <= 100.0) {
            return Err(Error::Config(format!(
                "percentile must lie in (0, 100], got {q}"
            )));
        }
        Ok(h)
    }
}
