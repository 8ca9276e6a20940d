//! Command-line orchestration: synthesise, train, calibrate, evaluate, report.
//!
//! The stages are also available as library functions in [`pipeline`], which
//! is what the subcommands call after loading their inputs from disk.

mod commands;
mod config;
mod files;
pub mod pipeline;

pub use commands::{
    cmd_calibrate, cmd_curate, cmd_eval, cmd_report, cmd_synth, cmd_train, exit_code, load_models,
    run, save_models, Cli, Command, Common, Format,
};
pub use config::{default_gate_specs, CalibrationPlan, DataSource, RunConfig};
pub use files::{read_json, write_json};
pub use pipeline::{
    calibrate_models, evaluate_models, run_in_memory, train_models, CalibrationReport, Evaluation,
    LayerCalibration, Models, BASELINE_ROW, CASCADE_ROW,
};
