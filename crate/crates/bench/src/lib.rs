//! Seeded benchmark harness: runs selection methods over seeds and budgets,
//! writes versioned CSV results, summarizes them and draws plots.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod plot;
pub mod records;
pub mod runner;
pub mod summary;

pub use config::{DatasetSpec, ExperimentConfig, Method, Timing, SCHEMA_VERSION};
pub use records::RunRecord;
pub use runner::{
    run_ablation, run_experiment, sweep_k, sweep_lambda_ot, ExperimentOutcome, RunSpec,
};
pub use summary::{summarize, SummaryRow};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("schema version {found} is not supported (expected {expected})")]
    Schema { found: u64, expected: u32 },
    #[error("label budget violated: {queries} queries for budget {budget}")]
    BudgetViolation { queries: usize, budget: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Rambo(#[from] rambo_core::config::ConfigError),
    #[error(transparent)]
    Data(#[from] rambo_core::datasets::DataError),
    #[error(transparent)]
    Classifier(#[from] rambo_core::classifier::ClassifierError),
    #[error(transparent)]
    Pretrain(#[from] rambo_core::pretraining::PretrainError),
    #[error(transparent)]
    Acquisition(#[from] rambo_core::acquisition::AcquisitionError),
    #[error(transparent)]
    Baseline(#[from] rambo_core::baselines::BaselineError),
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Io { path, source }
}
