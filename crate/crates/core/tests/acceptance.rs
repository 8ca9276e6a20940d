//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::panic;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nested_ood::calibration::{
    calibrate_f1max, calibrate_percentile, CalibrationMethod, Polarity, ThresholdSpec,
};
use nested_ood::cascade::{evaluate_cascade, Cascade, FinalGate, GateDetector};
use nested_ood::cli::pipeline::build_cascade;
use nested_ood::cli::{run_in_memory, DataSource, RunConfig, BASELINE_ROW, CASCADE_ROW};
use nested_ood::dataio::{
    generate_synthetic, load_manifest, write_manifest, Dataset, SampleRecord, Split, SynthConfig,
};
use nested_ood::detectors::{
    entropy, kl_to_uniform, logistic_loss_grad, oe_loss_grad, DetectorSpec, GateScorer,
    LogisticGate, OEConfig, Ridge, Scorer, SoftmaxHead,
};
use nested_ood::hierarchy::{count_nested_dichotomies, WorldHierarchy};
use nested_ood::metrics::{aupr, auroc, fpr_at_tpr, MetricsReport, RankScore, ScoredSample};
use nested_ood::Result;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// 1. metric oracles

fn random_samples(rng: &mut ChaCha8Rng) -> Vec<ScoredSample<f64>> {
    let n = rng.random_range(2..=500);
    // coarse grid so ties are common
    let levels = rng.random_range(2..40);
    let mut s: Vec<ScoredSample<f64>> = (0..n)
        .map(|_| {
            let label = rng.random_bool(0.4);
            if rng.random_bool(0.1) {
                ScoredSample::min(label)
            } else {
                let v = rng.random_range(0..levels) as f64 / levels as f64
                    + if label { 0.1 } else { 0.0 };
                ScoredSample::new(v, label)
            }
        })
        .collect();
    // both classes present
    s[0].label = true;
    s[1].label = false;
    s
}

fn pair_auroc(s: &[ScoredSample<f64>]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for p in s.iter().filter(|x| x.label) {
        for q in s.iter().filter(|x| !x.label) {
            pairs += 1.0;
            num += match p.score.total_cmp(&q.score) {
                Ordering::Greater => 1.0,
                Ordering::Equal => 0.5,
                Ordering::Less => 0.0,
            };
        }
    }
    num / pairs
}

/// `(tp, fp)` for "accept when score >= t", for every distinct score t, highest first.
fn exhaustive_sweep(s: &[ScoredSample<f64>]) -> Vec<(usize, usize)> {
    let mut cuts: Vec<RankScore<f64>> = s.iter().map(|x| x.score).collect();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
    cuts.iter()
        .map(|t| {
            let acc = s.iter().filter(|x| x.score.total_cmp(t) != Ordering::Less);
            let tp = acc.clone().filter(|x| x.label).count();
            (tp, acc.count() - tp)
        })
        .collect()
}

fn criterion_metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let s = random_samples(&mut rng);
        let got = auroc(&s).value;
        let want = pair_auroc(&s);
        worst = worst.max((got - want).abs());
        ensure!(
            (got - want).abs() <= 1e-12,
            "instance {i}: auroc {got} vs pair count {want}"
        );
    }
    for i in 0..50 {
        let s = random_samples(&mut rng);
        let pos = s.iter().filter(|x| x.label).count() as f64;
        let neg = s.len() as f64 - pos;
        let sweep = exhaustive_sweep(&s);
        let fpr95 = sweep
            .iter()
            .filter(|(tp, _)| *tp as f64 / pos >= 0.95)
            .map(|&(_, fp)| fp as f64 / neg)
            .fold(f64::INFINITY, f64::min);
        let got = fpr_at_tpr(&s, 0.95).value;
        ensure!(
            (got - fpr95).abs() <= 1e-12,
            "instance {i}: fpr95 {got} vs sweep {fpr95}"
        );
        let mut area = 0.0;
        let mut prev = 0.0;
        for &(tp, fp) in &sweep {
            let r = tp as f64 / pos;
            area += (r - prev) * tp as f64 / (tp + fp) as f64;
            prev = r;
        }
        let got = aupr(&s).value;
        ensure!(
            (got - area).abs() <= 1e-12,
            "instance {i}: aupr {got} vs sweep {area}"
        );
    }
    Ok(format!(
        "100 random instances with ties and sentinels; max AUROC deviation {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 2. gradients

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[allow(clippy::needless_range_loop)]
fn criterion_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let dim = 5;
    for point in 0..10 {
        let xs: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let labels: Vec<bool> = (0..30).map(|_| rng.random_bool(0.5)).collect();
        let gate = LogisticGate {
            weights: (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect(),
            bias: rng.random_range(-1.0..1.0),
        };
        let l2 = 1e-2;
        let (_, gw, gb) = ok(logistic_loss_grad(&gate, &rows, &labels, l2))?;
        let loss_at = |g: &LogisticGate<f64>| logistic_loss_grad(g, &rows, &labels, l2).unwrap().0;
        for j in 0..=dim {
            let (mut up, mut dn) = (gate.clone(), gate.clone());
            if j < dim {
                up.weights[j] += h;
                dn.weights[j] -= h;
            } else {
                up.bias += h;
                dn.bias -= h;
            }
            let fd = (loss_at(&up) - loss_at(&dn)) / (2.0 * h);
            let an = if j < dim { gw[j] } else { gb };
            let e = rel_err(fd, an);
            worst = worst.max(e);
            ensure!(
                e <= 1e-5,
                "logistic point {point} param {j}: fd {fd} vs analytic {an}"
            );
        }
    }
    let (k, lambda, floor) = (4, 0.5, 1e-7);
    for point in 0..10 {
        let id: Vec<Vec<f64>> = (0..24)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..24).map(|i| i % k).collect();
        let ood: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let idr: Vec<&[f64]> = id.iter().map(Vec::as_slice).collect();
        let oodr: Vec<&[f64]> = ood.iter().map(Vec::as_slice).collect();
        let w: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let head = ok(SoftmaxHead::new(k, dim, w.clone(), b.clone()))?;
        let g = ok(oe_loss_grad(&head, &idr, &labels, &oodr, lambda, floor))?;
        let loss_at = |w: Vec<f64>, b: Vec<f64>| {
            let hd = SoftmaxHead::new(k, dim, w, b).unwrap();
            oe_loss_grad(&hd, &idr, &labels, &oodr, lambda, floor)
                .unwrap()
                .total
        };
        for j in 0..k * dim + k {
            let (mut wu, mut wd, mut bu, mut bd) = (w.clone(), w.clone(), b.clone(), b.clone());
            if j < k * dim {
                wu[j] += h;
                wd[j] -= h;
            } else {
                bu[j - k * dim] += h;
                bd[j - k * dim] -= h;
            }
            let fd = (loss_at(wu, bu) - loss_at(wd, bd)) / (2.0 * h);
            let an = if j < k * dim {
                g.grad_weights[j]
            } else {
                g.grad_bias[j - k * dim]
            };
            let e = rel_err(fd, an);
            worst = worst.max(e);
            ensure!(
                e <= 1e-5,
                "outlier-exposure point {point} param {j}: fd {fd} vs analytic {an}"
            );
        }
    }
    Ok(format!(
        "10 points each for the gate loss and the mixed loss (lambda 0.5, K 4); worst relative error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 3. entropy / KL identities

fn criterion_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let floor = 1e-7;
    for k in 2..=10usize {
        let u = vec![1.0 / k as f64; k];
        let e = entropy(&u);
        ensure!(
            (e - (k as f64).ln()).abs() <= 1e-12,
            "H(uniform, {k}) = {e}"
        );
    }
    let mut worst = 0.0f64;
    for i in 0..100 {
        let k = rng.random_range(2..=12usize);
        let raw: Vec<f64> = (0..k)
            .map(|_| rng.random_range(0.0..1.0f64).powi(3))
            .collect();
        let total: f64 = raw.iter().sum();
        let mut p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        // lift entries below the floor, keeping the sum at one
        let deficit: f64 = p.iter().map(|&v| (floor - v).max(0.0)).sum();
        let big = (0..k).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        p.iter_mut().for_each(|v| *v = v.max(floor));
        p[big] -= deficit;
        let kl = ok(kl_to_uniform(&p, k, floor))?;
        let expect = (k as f64).ln() - entropy(&p);
        worst = worst.max((kl - expect).abs());
        ensure!(
            (kl - expect).abs() <= 1e-12,
            "point {i}: KL {kl} vs ln K - H {expect}"
        );
        ensure!(kl >= 0.0, "point {i}: negative KL {kl}");
    }
    Ok(format!(
        "ln K for K = 2..10; 100 simplex points, worst |KL - (ln K - H)| {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 4. calibration oracles

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn criterion_calibration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for i in 0..50 {
        let n = rng.random_range(2..200);
        let levels = rng.random_range(1..30);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| rng.random_range(0..levels) as f64 + if l { 3.0 } else { 0.0 })
            .collect();
        let polarity = if i % 2 == 0 {
            Polarity::AcceptHigh
        } else {
            Polarity::AcceptLow
        };
        let c = ok(calibrate_f1max(&scores, &labels, polarity, Split::Val))?;
        let p = labels.iter().filter(|&&l| l).count();
        // every achievable accept set: accept nothing, or everything on the accept side of each score
        let mut best = f1(0, 0, p);
        for &t in &scores {
            let acc = |s: f64| match polarity {
                Polarity::AcceptHigh => s >= t,
                Polarity::AcceptLow => s <= t,
            };
            let tp = scores
                .iter()
                .zip(&labels)
                .filter(|(&s, &l)| l && acc(s))
                .count();
            let fp = scores
                .iter()
                .zip(&labels)
                .filter(|(&s, &l)| !l && acc(s))
                .count();
            best = best.max(f1(tp, fp, p - tp));
        }
        let tp = scores
            .iter()
            .zip(&labels)
            .filter(|(&s, &l)| l && c.threshold.accepts(s))
            .count();
        let fp = scores
            .iter()
            .zip(&labels)
            .filter(|(&s, &l)| !l && c.threshold.accepts(s))
            .count();
        let got = f1(tp, fp, p - tp);
        ensure!(
            (got - best).abs() <= 1e-12,
            "set {i}: F1 {got} below sweep maximum {best}"
        );
    }
    for i in 0..50 {
        let n = rng.random_range(1..300);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let q = if i == 0 {
            100.0
        } else {
            rng.random_range(0.5..=100.0)
        };
        let c = ok(calibrate_percentile(
            &scores,
            q,
            Polarity::AcceptLow,
            Split::Val,
        ))?;
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = (q / 100.0 * n as f64).ceil() as usize;
        let want = sorted[rank.max(1) - 1];
        ensure!(
            c.threshold.value == want,
            "set {i}: percentile {} vs nearest rank {want}",
            c.threshold.value
        );
    }
    Ok("50 F1 sweeps and 50 nearest-rank percentiles match".into())
}

// ---------------------------------------------------------------------------
// 5. combinatorics

/// Unordered binary trees with leaves labelled by `set`: split off the subset
/// holding the lowest element, recurse on both sides.
fn enumerate_trees(set: &[usize]) -> u128 {
    if set.len() == 1 {
        return 1;
    }
    let (first, rest) = set.split_first().unwrap();
    let mut total = 0;
    for mask in 0..(1u32 << rest.len()) {
        let mut left = vec![*first];
        let mut right = Vec::new();
        for (i, &e) in rest.iter().enumerate() {
            if mask >> i & 1 == 1 {
                left.push(e);
            } else {
                right.push(e);
            }
        }
        if !right.is_empty() {
            total += enumerate_trees(&left) * enumerate_trees(&right);
        }
    }
    total
}

fn criterion_combinatorics() -> Check {
    let mut counts = Vec::new();
    for k in 2..=6 {
        let brute = enumerate_trees(&(0..k).collect::<Vec<_>>());
        let closed = ok(count_nested_dichotomies(k))?;
        ensure!(
            brute == closed,
            "k={k}: enumeration {brute} vs closed form {closed}"
        );
        counts.push(closed);
    }
    ensure!(
        counts == [1, 3, 15, 105, 945],
        "unexpected counts {counts:?}"
    );
    Ok(format!("k = 2..6 -> {counts:?}"))
}

// ---------------------------------------------------------------------------
// 6. cascade protocol

struct Probe {
    coord: usize,
    calls: AtomicUsize,
}

impl Scorer<f64> for Probe {
    fn dim(&self) -> usize {
        4
    }
    fn score(&self, x: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        Ok(x[self.coord])
    }
}

fn fixed(value: f64, polarity: Polarity) -> Option<ThresholdSpec<f64>> {
    Some(ThresholdSpec {
        value,
        polarity,
        method: CalibrationMethod::F1Max,
        source_split: Split::Val,
        degenerate: false,
    })
}

fn criterion_cascade_protocol() -> Check {
    let h = ok(WorldHierarchy::new(
        ["far", "near", "building", "monument", "known"],
        ["a", "b", "c", "d"],
    ))?;
    let gates: Vec<GateDetector<f64, Probe>> = (0..3)
        .map(|i| GateDetector {
            layer_index: i,
            name: format!("gate {i}"),
            scorer: Probe {
                coord: i,
                calls: AtomicUsize::new(0),
            },
            threshold: fixed(0.5, Polarity::AcceptHigh),
        })
        .collect();
    let mut w = vec![0.0; 16];
    w[3] = 100.0;
    let head = FinalGate {
        layer_index: 3,
        name: "styles".into(),
        head: ok(SoftmaxHead::new(4, 4, w, vec![0.0; 4]))?,
        threshold: fixed(0.5, Polarity::AcceptLow),
        training: None,
        seed: None,
    };
    let cascade = ok(Cascade::new(gates, head))?;
    let rec = |id: &str, world: &str, class: Option<&str>, x: [f64; 4]| SampleRecord {
        id: id.into(),
        features: x.to_vec(),
        label: h.label(world, class).unwrap(),
        split: Split::Test,
    };
    let records = vec![
        rec("known-accepted-1", "known", Some("a"), [1.0, 1.0, 1.0, 1.0]),
        rec("known-accepted-2", "known", Some("b"), [1.0, 1.0, 1.0, 0.8]),
        rec("known-rejected-3", "known", Some("c"), [1.0, 1.0, 1.0, 0.0]),
        rec(
            "building-rejected-2",
            "building",
            None,
            [1.0, 1.0, 0.0, 1.0],
        ),
        rec("building-accepted", "building", None, [1.0, 1.0, 1.0, 1.0]),
        rec("far-rejected-0", "far", None, [0.0, 1.0, 1.0, 1.0]),
    ];
    let eval = ok(evaluate_cascade(&cascade, &h, &records))?;
    let layers: Vec<Option<usize>> = eval.verdicts.iter().map(|v| v.rejection_layer).collect();
    ensure!(
        layers == [None, None, Some(3), Some(2), None, Some(0)],
        "rejection layers {layers:?}"
    );
    let cm = ok(eval.end_to_end.confusion())?;
    ensure!(
        (cm.tp, cm.fp, cm.tn, cm.fn_) == (2, 1, 2, 1),
        "confusion tp={} fp={} tn={} fn={}",
        cm.tp,
        cm.fp,
        cm.tn,
        cm.fn_
    );
    ensure!(
        (cm.precision().value - 2.0 / 3.0).abs() < 1e-15,
        "precision {}",
        cm.precision().value
    );
    ensure!(
        (cm.recall().value - 2.0 / 3.0).abs() < 1e-15,
        "recall {}",
        cm.recall().value
    );
    // the far sample stopped at gate 0; later gates never saw it
    let calls: Vec<usize> = cascade
        .gates()
        .iter()
        .map(|g| g.scorer.calls.load(AtomicOrdering::SeqCst))
        .collect();
    ensure!(calls == [6, 5, 5], "gate evaluation counts {calls:?}");
    let scored = &eval.end_to_end.scored;
    for (v, s) in eval.verdicts.iter().zip(scored) {
        let upstream = v.rejection_layer.is_some_and(|l| l < 3);
        ensure!(upstream == s.score.is_min(), "{}: sentinel mismatch", v.id);
        if upstream {
            for other in scored.iter().filter(|o| !o.score.is_min()) {
                ensure!(
                    s.score.total_cmp(&other.score) == Ordering::Less,
                    "sentinel not below finite score"
                );
            }
        }
    }
    let a = auroc(scored).value;
    ensure!(
        (a - pair_auroc(scored)).abs() < 1e-15,
        "auroc {a} disagrees with pair count"
    );
    Ok(format!(
        "TP=2 FP=1 TN=2 FN=1, precision = recall = 2/3, sentinel ranks lowest (AUROC {a:.4})"
    ))
}

// ---------------------------------------------------------------------------
// 7. monotone conservatism

fn default_test_set(
    cfg: &RunConfig,
) -> std::result::Result<(WorldHierarchy, Vec<SampleRecord<f64>>), String> {
    let h = ok(cfg.validate())?;
    let data: Dataset<f64> = ok(generate_synthetic(&cfg.synth_config().unwrap(), &h))?;
    let test = data.split(Split::Test).cloned().collect();
    Ok((h, test))
}

fn accepted_ids(
    c: &Cascade<f64, GateScorer<f64>>,
    h: &WorldHierarchy,
    test: &[SampleRecord<f64>],
) -> BTreeSet<String> {
    evaluate_cascade(c, h, test)
        .unwrap()
        .verdicts
        .into_iter()
        .filter(|v| v.accepted)
        .map(|v| v.id)
        .collect()
}

fn criterion_conservatism() -> Check {
    let cfg = RunConfig::default();
    let (models, _) = ok(run_in_memory(&cfg))?;
    let (h, test) = default_test_set(&cfg)?;
    let base = ok(build_cascade(&models))?;
    let original = accepted_ids(&base, &h, &test);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut shrunk = 0;
    for trial in 0..100 {
        let layer = rng.random_range(0..base.layer_count());
        let amount = 10f64.powf(rng.random_range(-4.0..-0.3));
        let mut c = base.clone();
        let t = c.threshold(layer).unwrap().tightened(amount);
        ok(c.set_threshold(layer, t))?;
        let after = accepted_ids(&c, &h, &test);
        ensure!(
            after.is_subset(&original),
            "trial {trial}: tightening layer {layer} by {amount} added samples"
        );
        if after.len() < original.len() {
            shrunk += 1;
        }
    }
    Ok(format!(
        "100 perturbations, accepted set always a subset of the original {} ({shrunk} strictly smaller)",
        original.len()
    ))
}

// ---------------------------------------------------------------------------
// 8. cascade versus flat baseline

const CASCADE_PRECISION: f64 = 0.6533;
const BASELINE_PRECISION: f64 = 0.3097;

fn criterion_directional() -> Check {
    let cfg = RunConfig::default();
    let synth = cfg.synth_config().unwrap();
    ensure!(
        synth.dim == 16
            && synth.per_world_count == 500
            && synth.separation == 2.5
            && synth.class_separation == 2.0,
        "default synthetic config drifted: {synth:?}"
    );
    let (_, eval) = ok(run_in_memory(&cfg))?;
    let row = |name: &str| eval.report.global.iter().find(|g| g.name == name).cloned();
    let cascade = row(CASCADE_ROW).ok_or("missing cascade row")?;
    let flat = row(BASELINE_ROW).ok_or("missing baseline row")?;
    let (pc, pf, rc) = (
        cascade.precision.value,
        flat.precision.value,
        cascade.recall.value,
    );
    ensure!(
        pc > pf,
        "cascade precision {pc:.4} not above flat baseline {pf:.4}"
    );
    ensure!(rc >= 0.5, "cascade recall {rc:.4} below 0.5");
    ensure!(
        (pc - CASCADE_PRECISION).abs() <= 0.02,
        "cascade precision {pc:.4} left fixture {CASCADE_PRECISION}"
    );
    ensure!(
        (pf - BASELINE_PRECISION).abs() <= 0.02,
        "baseline precision {pf:.4} left fixture {BASELINE_PRECISION}"
    );
    Ok(format!(
        "precision cascade {pc:.4} > flat {pf:.4}; cascade recall {rc:.4}"
    ))
}

// ---------------------------------------------------------------------------
// 9. separation limits

fn separation_run(sep: f64) -> std::result::Result<Vec<f64>, String> {
    let cfg = RunConfig {
        data: DataSource::Synth(SynthConfig {
            per_world_count: 2000,
            separation: sep,
            class_separation: sep,
            ..Default::default()
        }),
        ..Default::default()
    };
    let (_, eval) = ok(run_in_memory(&cfg))?;
    let aurocs = eval.report.layers.iter().map(|l| l.auroc.value).collect();
    Ok(aurocs)
}

fn criterion_separation() -> Check {
    let far = separation_run(8.0)?;
    ensure!(
        far.iter().all(|&a| a >= 0.99),
        "separation 8: per-layer AUROC {far:?}"
    );
    let none = separation_run(0.0)?;
    ensure!(
        none.iter().all(|&a| (a - 0.5).abs() <= 0.05),
        "separation 0: per-layer AUROC {none:?}"
    );
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|a| format!("{a:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok(format!("sep 8: [{}]; sep 0: [{}]", fmt(&far), fmt(&none)))
}

// ---------------------------------------------------------------------------
// 10. serialization

fn round_trip<T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(
    what: &str,
    v: &T,
) -> std::result::Result<(), String> {
    let text = serde_json::to_string(v).map_err(|e| e.to_string())?;
    let back: T = serde_json::from_str(&text).map_err(|e| format!("{what}: {e}"))?;
    ensure!(&back == v, "{what} changed after reload");
    Ok(())
}

fn criterion_serialization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    // awkward values: full-precision randoms, subnormal-adjacent and large magnitudes
    let mut awkward = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| match i % 4 {
                0 => rng.random_range(-1.0..1.0),
                1 => rng.random_range(-1.0..1.0) * 1e-300,
                2 => rng.random_range(-1.0..1.0) * 1e300,
                _ => 0.1 + 0.2,
            })
            .collect()
    };
    let head = ok(SoftmaxHead::new(3, 4, awkward(12), awkward(3)))?;
    round_trip("softmax head", &head)?;

    let h = ok(nested_ood::dataio::default_hierarchy(4))?;
    let synth = SynthConfig {
        per_world_count: 30,
        dim: 6,
        ..Default::default()
    };
    let data: Dataset<f64> = ok(generate_synthetic(&synth, &h))?;
    let xs: Vec<&[f64]> = data
        .records()
        .iter()
        .map(|r| r.features.as_slice())
        .collect();
    let accept: Vec<bool> = data.records().iter().map(|r| r.label.depth() > 0).collect();
    let fine: Vec<usize> = data.records().iter().map(|r| r.label.depth()).collect();
    let specs = [
        DetectorSpec::default(),
        DetectorSpec::Mahalanobis {
            ridge: Ridge::Auto,
            scaled: true,
        },
        DetectorSpec::Knn {
            k: 5,
            scaled: false,
        },
        DetectorSpec::Energy {
            train: OEConfig {
                epochs: 20,
                ..Default::default()
            },
        },
    ];
    for spec in &specs {
        let scorer = ok(spec.fit(&xs, &accept, &fine))?;
        round_trip(spec.name(), &scorer)?;
        round_trip("detector spec", spec)?;
    }
    for value in [
        0.123_456_789_012_345_67,
        f64::INFINITY,
        f64::NEG_INFINITY,
        -1e-308,
    ] {
        round_trip("threshold", &fixed(value, Polarity::AcceptLow).unwrap())?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("all.jsonl");
    ok(write_manifest(&path, &h, data.records()))?;
    let back: Dataset<f64> = ok(load_manifest(&path, &h))?;
    ensure!(back == data, "manifest reload differs");

    let (_, eval) = ok(run_in_memory(&RunConfig {
        data: DataSource::Synth(SynthConfig {
            per_world_count: 40,
            dim: 4,
            ..Default::default()
        }),
        ..Default::default()
    }))?;
    let text = ok(eval.report.to_json())?;
    let report = ok(MetricsReport::from_json(&text))?;
    ensure!(report == eval.report, "report reload differs");
    Ok(format!(
        "softmax head, {} detector kinds, thresholds incl. infinities, {}-record manifest and a report reload bit-exact",
        specs.len(),
        data.len()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "metric oracles (AUROC pair count, FPR95 and AUPR sweeps)",
            criterion_metric_oracles,
        ),
        (
            "loss gradients match central differences",
            criterion_gradients,
        ),
        ("entropy and KL identities", criterion_identities),
        (
            "calibration oracles (F1 sweep, nearest rank)",
            criterion_calibration,
        ),
        (
            "nested dichotomy count equals enumeration",
            criterion_combinatorics,
        ),
        (
            "cascade protocol on the six-sample set",
            criterion_cascade_protocol,
        ),
        (
            "monotone conservatism under tightening",
            criterion_conservatism,
        ),
        (
            "cascade precision beats the flat baseline",
            criterion_directional,
        ),
        ("per-layer AUROC at separation limits", criterion_separation),
        ("serialization round trips", criterion_serialization),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, &(name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("criterion {:>2}: PASS  {name} — {detail} [{ms} ms]", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {:>2}: FAIL  {name} — {why} [{ms} ms]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
