//! Experiment harness: configuration, the staged pipeline, reports, q-sweeps
//! and codebook comparisons.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use config::{ClassifierConfig, DatasetSpec, ExperimentConfig, PairPolicyKind, SweepConfig};
pub use pipeline::{load_dataset, run_pipeline, Artifacts, Pipeline, Prediction, RunState, Stage};
pub use report::EvaluationReport;
pub use sweep::{compare_codebooks, sweep_q, CompareRow, SweepResult, SweepRow};
