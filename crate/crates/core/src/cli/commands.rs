//! Subcommands and their file handoffs.
//!
//! Every stage reads and writes under one output directory:
//!
//! ```text
//! run.json                 effective run configuration
//! hierarchy.json           world hierarchy
//! {train,val,test}.jsonl   synthetic manifests
//! models/gate_{i}.json     structural gates
//! models/head.json         final softmax head
//! calibration.json         threshold per layer with its method
//! report.json/.csv         metrics
//! verdicts.jsonl           per-sample cascade verdicts
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cascade::{FinalGate, GateDetector};
use crate::dataio::{
    curation_filter, generate_synthetic, load_embedding_file, load_manifest, load_prompt_file,
    write_manifest, Dataset, Split,
};
use crate::detectors::DetectorSpec;
use crate::error::{Error, Result};
use crate::hierarchy::WorldHierarchy;
use crate::metrics::MetricsReport;

use super::config::RunConfig;
use super::files::{read_json, write_json, write_jsonl, write_text};
use super::pipeline::{calibrate_models, evaluate_models, train_models, Models};

#[derive(Debug, Parser)]
#[command(
    name = "nested-ood",
    version,
    about = "Train, calibrate and evaluate cascades of OOD gates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (JSON); defaults to OUT/run.json, then built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train/val/test manifests and the hierarchy.
    Synth(Common),
    /// Train every structural gate and the final head on the train split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Outlier-exposure weight for the final head [config default: 0.5].
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fit thresholds on the validation split.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Entropy percentile for the final gate [config default: 95].
        #[arg(long)]
        percentile: Option<f64>,
    },
    /// Evaluate the calibrated cascade and the flat baseline on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print a previously written report.
    Report {
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Filter precomputed embeddings against a concept's prompt embeddings.
    Curate {
        /// JSON Lines of {"concept", "embedding"}.
        #[arg(long)]
        prompts: PathBuf,
        /// JSON Lines of {"id", "embedding"}.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        concept: String,
        /// Minimum best-prompt cosine similarity.
        #[arg(long, default_value_t = 0.25)]
        tau: f64,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Load { .. }
        | Error::Data(_)
        | Error::DimensionMismatch { .. }
        | Error::Training(_)
        | Error::Json(_) => 3,
        Error::Domain(_) => 2,
        Error::Numeric(_) => 4,
        Error::Io { .. } => 5,
        Error::Sample { source, .. } => exit_code(source),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GateFile {
    seed: u64,
    spec: DetectorSpec,
    gate: GateDetector<f64>,
}

fn gate_path(out: &Path, layer: usize) -> PathBuf {
    out.join("models").join(format!("gate_{layer}.json"))
}

fn head_path(out: &Path) -> PathBuf {
    out.join("models").join("head.json")
}

pub fn save_models(out: &Path, models: &Models<f64>) -> Result<()> {
    for (spec, gate) in models.specs.iter().zip(&models.gates) {
        write_json(
            &gate_path(out, gate.layer_index),
            &GateFile {
                seed: models.seed,
                spec: spec.clone(),
                gate: gate.clone(),
            },
        )?;
    }
    write_json(&head_path(out), &models.head)
}

pub fn load_models(out: &Path, h: &WorldHierarchy) -> Result<Models<f64>> {
    let mut specs = Vec::new();
    let mut gates = Vec::new();
    for layer in 0..h.layer_count() - 1 {
        let f: GateFile = read_json(&gate_path(out, layer))?;
        if f.gate.layer_index != layer {
            return Err(Error::Config(format!(
                "{} holds layer {}",
                gate_path(out, layer).display(),
                f.gate.layer_index
            )));
        }
        specs.push(f.spec);
        gates.push(f.gate);
    }
    let head: FinalGate<f64> = read_json(&head_path(out))?;
    if head.head.classes() != h.class_count() {
        return Err(Error::Config(format!(
            "head has {} classes but the hierarchy has {}",
            head.head.classes(),
            h.class_count()
        )));
    }
    Ok(Models {
        seed: head.seed.unwrap_or_default(),
        specs,
        gates,
        head,
    })
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let saved = common.out.join("run.json");
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None if saved.exists() => RunConfig::load(&saved)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// The hierarchy written by `synth`, or the configured one.
fn resolve_hierarchy(cfg: &RunConfig, out: &Path) -> Result<WorldHierarchy> {
    let written = out.join("hierarchy.json");
    if cfg.hierarchy.is_none() && written.exists() {
        read_json(&written)
    } else {
        cfg.hierarchy()
    }
}

fn load_split(
    cfg: &RunConfig,
    out: &Path,
    h: &WorldHierarchy,
    split: Split,
) -> Result<Dataset<f64>> {
    let path = cfg.manifest_path(out, split);
    if !path.exists() {
        return Err(Error::Data(format!(
            "missing {split} manifest {}",
            path.display()
        )));
    }
    Ok(load_manifest::<f64>(&path, h)?.only(split))
}

fn render(report: &MetricsReport, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv(),
        Format::Table => report.to_table(),
    })
}

pub fn cmd_synth(common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    let h = cfg.validate()?;
    let synth = cfg
        .synth_config()
        .ok_or_else(|| Error::Config("synth needs a synthetic data source".into()))?;
    let data = generate_synthetic::<f64>(&synth, &h)?;
    let out = &common.out;
    write_json(&out.join("hierarchy.json"), &h)?;
    for split in Split::ALL {
        write_manifest(&cfg.manifest_path(out, split), &h, data.split(split))?;
    }
    write_json(&out.join("run.json"), &cfg)
}

pub fn cmd_train(common: &Common, lambda: Option<f64>) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    if let Some(l) = lambda {
        cfg.head.lambda = l;
    }
    let h = resolve_hierarchy(&cfg, &common.out)?;
    cfg.validate()?;
    let data = load_split(&cfg, &common.out, &h, Split::Train)?;
    let models = train_models(&cfg, &data)?;
    save_models(&common.out, &models)?;
    write_json(&common.out.join("run.json"), &cfg)
}

pub fn cmd_calibrate(common: &Common, percentile: Option<f64>) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    if let Some(q) = percentile {
        cfg.calibration.percentile = q;
    }
    let h = resolve_hierarchy(&cfg, &common.out)?;
    cfg.validate()?;
    let data = load_split(&cfg, &common.out, &h, Split::Val)?;
    let mut models = load_models(&common.out, &h)?;
    let report = calibrate_models(&mut models, &cfg, &data)?;
    save_models(&common.out, &models)?;
    write_json(&common.out.join("calibration.json"), &report)?;
    write_json(&common.out.join("run.json"), &cfg)
}

pub fn cmd_eval(common: &Common, format: Format) -> Result<String> {
    let cfg = resolve_config(common)?;
    let h = resolve_hierarchy(&cfg, &common.out)?;
    let data = load_split(&cfg, &common.out, &h, Split::Test)?;
    let models = load_models(&common.out, &h)?;
    let eval = evaluate_models(&models, &data)?;
    let out = &common.out;
    write_text(&out.join("report.json"), &(eval.report.to_json()? + "\n"))?;
    write_text(&out.join("report.csv"), &eval.report.to_csv())?;
    let rows: Vec<_> = eval.verdicts.iter().map(|v| v.to_row(&h)).collect();
    write_jsonl(&out.join("verdicts.jsonl"), &rows)?;
    render(&eval.report, format)
}

pub fn cmd_report(out: &Path, format: Format) -> Result<String> {
    let path = out.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    render(&MetricsReport::from_json(&text)?, format)
}

#[derive(Debug, Serialize)]
struct CurationFile<'a> {
    concept: &'a str,
    tau: f64,
    accepted: Vec<String>,
    rejected: Vec<String>,
}

pub fn cmd_curate(
    prompts: &Path,
    embeddings: &Path,
    concept: &str,
    tau: f64,
    out: &Path,
) -> Result<String> {
    let bank = load_prompt_file::<f64>(prompts)?;
    let cfg = bank.config_for(concept, tau)?;
    let items = load_embedding_file::<f64>(embeddings)?;
    let outcome = curation_filter(&items, &cfg)?;
    let summary = format!(
        "{concept}: {} accepted, {} unmatched (tau {tau})",
        outcome.accepted.len(),
        outcome.rejected.len()
    );
    write_json(
        &out.join("curation.json"),
        &CurationFile {
            concept,
            tau,
            accepted: outcome.accepted,
            rejected: outcome.rejected,
        },
    )?;
    Ok(summary)
}

/// Runs one parsed command; returns text for standard output.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(common) => {
            cmd_synth(&common).map(|_| format!("wrote manifests to {}", common.out.display()))
        }
        Command::Train { common, lambda } => cmd_train(&common, lambda)
            .map(|_| format!("wrote models to {}", common.out.join("models").display())),
        Command::Calibrate { common, percentile } => cmd_calibrate(&common, percentile)
            .map(|_| format!("wrote {}", common.out.join("calibration.json").display())),
        Command::Eval { common, format } => cmd_eval(&common, format),
        Command::Report { out, format } => cmd_report(&out, format),
        Command::Curate {
            prompts,
            embeddings,
            concept,
            tau,
            out,
        } => cmd_curate(&prompts, &embeddings, &concept, tau, &out),
    }
}
