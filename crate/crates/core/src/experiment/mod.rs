//! Experiment driver: configuration files, problem setup, pipelines and
//! consolidated reports.

pub mod config;
pub mod eos;
pub mod pipeline;
pub mod report;
pub mod selftest;
pub mod setup;

pub use config::{preset, ExperimentConfig, PRESETS};
pub use pipeline::{run_reference, run_sparse, run_train, run_uq, ReferenceOutput, RunOptions, RunOutput, RunSummary};
pub use report::{build_report, collect_runs, write_report, Report};
pub use selftest::{reference_self_test, SelfCheck};
