//! Config-driven experiment runner: executes the full pipeline per
//! `(alpha, sigma, seed)` cell, aggregates across seeds, and writes CSV,
//! JSON, and SVG outputs.
//!
//! A job is one `(alpha, seed)` pair and covers every sigma in the grid at
//! once: the design matrix and its factorization depend only on `(alpha,
//! seed)`, while sigma merely rescales the shared noise draw, so each job
//! pays for one SVD regardless of how many noise levels it reports.
//! `run_one` routes through the same job code, which makes single runs and
//! sweep cells bitwise identical.

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod plot;
pub mod record;
pub mod sweep;

pub use config::{OodMode, RunConfig, SweepGrid};
pub use record::{
    aggregate_rows, run_job, run_one, MetricAggregate, RunRecord, SeedRow, AGGREGATE_METRICS,
    RESULTS_HEADER,
};
pub use sweep::{run_cell, sweep, write_outputs, Failure, JobTiming, SweepOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("run(alpha={alpha}, sigma={sigma}, seed={seed}): {message}")]
    Run { alpha: f64, sigma: f64, seed: u64, message: String },
}

impl HarnessError {
    /// Stable machine-readable tag for the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Run { .. } => "run",
        }
    }
}
