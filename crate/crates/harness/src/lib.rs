//! Experiment orchestration for the `caserank` toolkit: fold-wise training
//! and evaluation, C sweeps, paired pointwise/pairwise comparisons, and
//! report emission (summary CSV, per-query JSON, ROC curves, score dumps).

pub mod compare;
pub mod config;
pub mod error;
pub mod models;
pub mod output;
pub mod run;

pub use compare::{compare_pointwise_pairwise, CompareConfig, CompareSummary, DataSource};
pub use config::{ExperimentConfig, ModelEntry, ModelSpec, Protocol};
pub use error::{HarnessError, Result};
pub use output::emit_outputs;
pub use run::{
    fold_splits, run_experiment, run_on_dataset, sweep_c, sweep_on_dataset, ExperimentResult,
    RunRecord, RunStatus, SweepResult,
};
