//! Monte-Carlo benchmark runner: configuration, presets, sweep execution
//! and CSV output.

pub mod config;
pub mod presets;
pub mod runner;
pub mod table;

pub use config::{EstimatorKind, ExperimentConfig, ReceiverKind, SweepVar};
pub use presets::{preset, scaled, PRESETS};
pub use runner::{run_sweep, run_sweep_with, workers_from_env, WORKERS_ENV};
pub use table::{nmse, SweepRow, SweepTable, TrialRecord, CSV_HEADER};
