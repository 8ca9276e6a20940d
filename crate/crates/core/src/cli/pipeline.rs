//! In-memory train → calibrate → evaluate stages behind the subcommands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_f1max, calibrate_percentile, Calibrated, CalibrationMethod, CalibrationSummary,
    Polarity, ThresholdSpec,
};
use crate::cascade::{
    evaluate_cascade, flat_baseline, per_layer_evaluate, Cascade, CascadeVerdict, FinalGate,
    GateDetector,
};
use crate::dataio::{generate_synthetic, Dataset, SampleRecord, Split};
use crate::detectors::{train_oe, DetectorSpec, GateScorer, Scorer, SoftmaxHead};
use crate::error::{Error, Result};
use crate::hierarchy::{WorldHierarchy, WorldLabel};
use crate::metrics::{build_report, GlobalInput, MetricsReport};
use crate::scalar::Scalar;

use super::config::RunConfig;

pub const CASCADE_ROW: &str = "cascade";
pub const BASELINE_ROW: &str = "flat baseline";

/// Trained gates and head, with or without thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Models<F: Scalar> {
    pub seed: u64,
    pub specs: Vec<DetectorSpec>,
    pub gates: Vec<GateDetector<F>>,
    pub head: FinalGate<F>,
}

/// Name of the split between world `layer` and everything deeper.
pub fn layer_name(h: &WorldHierarchy, layer: usize) -> String {
    format!("{}|{}", h.worlds()[layer], h.worlds()[layer + 1])
}

pub fn layer_names(h: &WorldHierarchy) -> Vec<String> {
    (0..h.layer_count()).map(|l| layer_name(h, l)).collect()
}

/// Label used by one-sided detectors: the world, refined by class in the innermost world.
pub fn fine_label(h: &WorldHierarchy, label: &WorldLabel) -> usize {
    match label.class_id() {
        Some(c) => h.max_depth() + c,
        None => label.depth(),
    }
}

fn split_rows<F: Scalar>(data: &Dataset<F>, split: Split) -> Result<Vec<&SampleRecord<F>>> {
    let rows: Vec<_> = data.split(split).collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("the {split} split is empty")));
    }
    Ok(rows)
}

/// Gate `layer` operates on samples at depth >= `layer`; positives belong deeper.
fn gate_population<'a, F>(rows: &[&'a SampleRecord<F>], layer: usize) -> Vec<&'a SampleRecord<F>> {
    rows.iter()
        .copied()
        .filter(|r| r.label.depth() >= layer)
        .collect()
}

pub fn train_models<F: Scalar>(cfg: &RunConfig, data: &Dataset<F>) -> Result<Models<F>> {
    let h = data.hierarchy();
    let specs = cfg.gate_specs(h)?;
    let train = split_rows(data, Split::Train)?;
    let gates = specs
        .par_iter()
        .enumerate()
        .map(|(layer, spec)| {
            let pop = gate_population(&train, layer);
            let accept: Vec<bool> = pop.iter().map(|r| r.label.depth() > layer).collect();
            let name = layer_name(h, layer);
            if accept.iter().all(|&a| a) || accept.iter().all(|&a| !a) {
                return Err(Error::Training(format!(
                    "gate {layer} ({name}) has a single-class training population"
                )));
            }
            let xs: Vec<&[F]> = pop.iter().map(|r| r.features.as_slice()).collect();
            let fine: Vec<usize> = pop.iter().map(|r| fine_label(h, &r.label)).collect();
            let scorer = spec
                .fit(&xs, &accept, &fine)
                .map_err(|e| Error::Training(format!("gate {layer} ({name}): {e}")))?;
            Ok(GateDetector {
                layer_index: layer,
                name,
                scorer,
                threshold: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max = h.max_depth();
    let (known, outliers): (Vec<&SampleRecord<F>>, Vec<&SampleRecord<F>>) = train
        .iter()
        .filter(|r| r.label.depth() + 1 >= max)
        .partition(|r| r.label.depth() == max);
    if known.is_empty() {
        return Err(Error::Training(
            "no innermost-world training samples".into(),
        ));
    }
    let id: Vec<&[F]> = known.iter().map(|r| r.features.as_slice()).collect();
    let labels: Vec<usize> = known
        .iter()
        .map(|r| r.label.class_id().expect("innermost samples carry a class"))
        .collect();
    let ood: Vec<&[F]> = outliers.iter().map(|r| r.features.as_slice()).collect();
    let head_cfg = cfg.head_config();
    let init = SoftmaxHead::zeros(h.class_count(), data.dim())?;
    let trained = train_oe(&init, &id, &labels, &ood, &head_cfg)?;
    Ok(Models {
        seed: cfg.seed,
        specs,
        gates,
        head: FinalGate {
            layer_index: h.layer_count() - 1,
            name: layer_name(h, h.layer_count() - 1),
            head: trained.head,
            threshold: None,
            training: Some(head_cfg),
            seed: Some(cfg.seed),
        },
    })
}

/// One calibrated layer, as written to the calibration report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCalibration {
    pub layer: usize,
    pub name: String,
    pub threshold: ThresholdSpec<f64>,
    pub summary: CalibrationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub seed: u64,
    pub layers: Vec<LayerCalibration>,
}

/// Percentile cut on accepted-side scores where higher means accept:
/// keeps the top `q` percent of the positives.
fn calibrate_upper<F: Scalar>(positives: &[F], q: f64) -> Result<Calibrated<F>> {
    let negated: Vec<F> = positives.iter().map(|&s| -s).collect();
    let mut c = calibrate_percentile(&negated, q, Polarity::AcceptLow, Split::Val)?;
    c.threshold.value = -c.threshold.value;
    c.threshold.polarity = Polarity::AcceptHigh;
    Ok(c)
}

fn score_all<F: Scalar, S: Scorer<F> + Sync>(
    scorer: &S,
    rows: &[&SampleRecord<F>],
) -> Result<Vec<F>> {
    rows.par_iter()
        .map(|r| {
            scorer.score(&r.features).map_err(|e| Error::Sample {
                id: r.id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

struct EntropyScorer<'a, F: Scalar>(&'a SoftmaxHead<F>);

impl<F: Scalar> Scorer<F> for EntropyScorer<'_, F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn score(&self, x: &[F]) -> Result<F> {
        self.0.entropy_score(x)
    }
}

/// Fits every threshold on the validation split and stores it in `models`.
pub fn calibrate_models<F: Scalar>(
    models: &mut Models<F>,
    cfg: &RunConfig,
    data: &Dataset<F>,
) -> Result<CalibrationReport> {
    let h = data.hierarchy();
    let methods = cfg.gate_methods(h)?;
    if methods.len() != models.gates.len() {
        return Err(Error::Config("models do not match the hierarchy".into()));
    }
    let val = split_rows(data, Split::Val)?;
    let mut layers = Vec::with_capacity(models.gates.len() + 1);
    for (gate, method) in models.gates.iter_mut().zip(&methods) {
        let layer = gate.layer_index;
        let pop = gate_population(&val, layer);
        let scores = score_all(&gate.scorer, &pop)?;
        let labels: Vec<bool> = pop.iter().map(|r| r.label.depth() > layer).collect();
        let c = match *method {
            CalibrationMethod::F1Max => {
                calibrate_f1max(&scores, &labels, Polarity::AcceptHigh, Split::Val)?
            }
            CalibrationMethod::Percentile { q } => {
                let pos: Vec<F> = scores
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l)
                    .map(|(&s, _)| s)
                    .collect();
                calibrate_upper(&pos, q)?
            }
        };
        layers.push(record(layer, &gate.name, &c));
        gate.threshold = Some(c.threshold);
    }
    let known: Vec<&SampleRecord<F>> = val
        .iter()
        .copied()
        .filter(|r| r.label.depth() == h.max_depth())
        .collect();
    if known.is_empty() {
        return Err(Error::Data("no innermost-world validation samples".into()));
    }
    let entropies = score_all(&EntropyScorer(&models.head.head), &known)?;
    let c = calibrate_percentile(
        &entropies,
        cfg.calibration.percentile,
        Polarity::AcceptLow,
        Split::Val,
    )?;
    layers.push(record(models.head.layer_index, &models.head.name, &c));
    models.head.threshold = Some(c.threshold);
    Ok(CalibrationReport {
        seed: models.seed,
        layers,
    })
}

fn record<F: Scalar>(layer: usize, name: &str, c: &Calibrated<F>) -> LayerCalibration {
    LayerCalibration {
        layer,
        name: name.to_string(),
        threshold: ThresholdSpec {
            value: c.threshold.value.as_f64(),
            polarity: c.threshold.polarity,
            method: c.threshold.method,
            source_split: c.threshold.source_split,
            degenerate: c.threshold.degenerate,
        },
        summary: c.summary.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation<F> {
    pub report: MetricsReport,
    pub verdicts: Vec<CascadeVerdict<F>>,
}

pub fn build_cascade<F: Scalar>(models: &Models<F>) -> Result<Cascade<F, GateScorer<F>>> {
    Cascade::new(models.gates.clone(), models.head.clone())
}

/// Per-layer rows, the cascade row and the flat-baseline row, on the test split only.
pub fn evaluate_models<F: Scalar>(models: &Models<F>, data: &Dataset<F>) -> Result<Evaluation<F>> {
    let h = data.hierarchy();
    let cascade = build_cascade(models)?;
    Error::check_dim(cascade.dim(), data.dim())?;
    let test: Vec<SampleRecord<F>> = split_rows(data, Split::Test)?
        .into_iter()
        .cloned()
        .collect();
    let layers = per_layer_evaluate(&cascade, h, &test)?;
    let end_to_end = evaluate_cascade(&cascade, h, &test)?;
    let baseline = flat_baseline(cascade.head(), h, &test)?;
    let report = build_report(
        &layer_names(h),
        &layers,
        &[
            GlobalInput {
                name: CASCADE_ROW.into(),
                eval: end_to_end.end_to_end,
            },
            GlobalInput {
                name: BASELINE_ROW.into(),
                eval: baseline,
            },
        ],
        Some(models.seed),
    )?;
    Ok(Evaluation {
        report,
        verdicts: end_to_end.verdicts,
    })
}

/// Synthesises (if configured), trains, calibrates and evaluates in one go.
pub fn run_in_memory(cfg: &RunConfig) -> Result<(Models<f64>, Evaluation<f64>)> {
    let h = cfg.validate()?;
    let synth = cfg
        .synth_config()
        .ok_or_else(|| Error::Config("in-memory runs need a synthetic data source".into()))?;
    let data = generate_synthetic::<f64>(&synth, &h)?;
    let mut models = train_models(cfg, &data)?;
    calibrate_models(&mut models, cfg, &data)?;
    let eval = evaluate_models(&models, &data)?;
    Ok((models, eval))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::DataSource;
    use crate::dataio::SynthConfig;

    fn small(separation: f64) -> RunConfig {
        RunConfig {
            data: DataSource::Synth(SynthConfig {
                per_world_count: 60,
                dim: 4,
                separation,
                class_separation: separation,
                ..Default::default()
            }),
            head: crate::detectors::OEConfig {
                epochs: 60,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn full_run_shapes() {
        let (models, eval) = run_in_memory(&small(6.0)).unwrap();
        assert_eq!(models.gates.len(), 3);
        assert_eq!(models.head.training.as_ref().unwrap().lambda, 0.5);
        assert_eq!(eval.report.layers.len(), 4);
        let names: Vec<&str> = eval.report.global.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, vec![CASCADE_ROW, BASELINE_ROW]);
        assert_eq!(eval.verdicts.len(), 60 * 5);
        assert!(eval.verdicts.iter().all(|v| v.split == Split::Test));
        assert_eq!(eval.report.seed, Some(7));
    }

    #[test]
    fn rerun_is_identical() {
        let (a, ea) = run_in_memory(&small(3.0)).unwrap();
        let (b, eb) = run_in_memory(&small(3.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ea.report, eb.report);
    }

    #[test]
    fn full_percentile_keeps_max_entropy() {
        let mut cfg = small(4.0);
        cfg.calibration.percentile = 100.0;
        let h = cfg.validate().unwrap();
        let data = generate_synthetic::<f64>(&cfg.synth_config().unwrap(), &h).unwrap();
        let mut models = train_models(&cfg, &data).unwrap();
        let report = calibrate_models(&mut models, &cfg, &data).unwrap();
        let max = data
            .split(Split::Val)
            .filter(|r| r.label.depth() == h.max_depth())
            .map(|r| models.head.head.entropy_score(&r.features).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(models.head.threshold.as_ref().unwrap().value, max);
        assert_eq!(report.layers.len(), 4);
        assert_eq!(report.layers[0].summary.method, CalibrationMethod::F1Max);
    }

    #[test]
    fn upper_percentile_keeps_top_share() {
        let scores: Vec<f64> = (1..=20).map(f64::from).collect();
        let c = calibrate_upper(&scores, 95.0).unwrap();
        assert_eq!(c.threshold.value, 2.0);
        assert_eq!(
            scores.iter().filter(|&&s| c.threshold.accepts(s)).count(),
            19
        );
    }
}
