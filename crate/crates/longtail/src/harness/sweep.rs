//! Grid execution and output emission.
//!
//! Jobs (one per `(alpha, seed)`) run in parallel and cover every sigma;
//! results are reassembled in deterministic `(alpha, sigma, seed)` order
//! before anything is written. A failing seed becomes a `Failure` entry and
//! never aborts the sweep.
//!
//! Output files, all under the config's `output_dir`:
//!
//! ```text
//! results.csv       one row per (alpha, sigma, seed), schema in record.rs
//! aggregates.csv    per-cell mean / variance-of-mean per metric
//! failures.json     per-seed errors, empty array when clean
//! timings.csv       per-job wall time; the only non-deterministic file
//! config_used.toml  the effective configuration
//! plots/*.csv       one series table per figure panel (sweep only)
//! plots/*.svg       rendered line charts with error bars (sweep only)
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::plot::{line_chart_svg, Series};
use super::record::{aggregate_rows, aggregates_csv, results_csv, run_job, RunRecord};
use super::HarnessError;

/// One seed that did not produce a row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
    pub message: String,
}

/// Wall time of one `(alpha, seed)` job across all its sigmas.
#[derive(Clone, Debug, PartialEq)]
pub struct JobTiming {
    pub alpha: f64,
    pub seed: u64,
    pub milliseconds: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<RunRecord>,
    pub failures: Vec<Failure>,
    pub timings: Vec<JobTiming>,
}

fn sweep_grid(config: &RunConfig, alphas: &[f64], sigmas: &[f64]) -> SweepOutcome {
    let seeds = config.effective_seeds();
    let jobs: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|ai| (0..seeds.len()).map(move |si| (ai, si)))
        .collect();
    let results: Vec<(Vec<Result<super::record::SeedRow, HarnessError>>, u128)> = jobs
        .par_iter()
        .map(|&(ai, si)| {
            let started = Instant::now();
            let rows = run_job(config, alphas[ai], sigmas, seeds[si]);
            (rows, started.elapsed().as_millis())
        })
        .collect();

    let mut cells = Vec::with_capacity(alphas.len() * sigmas.len());
    let mut failures = Vec::new();
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (gi, &sigma) in sigmas.iter().enumerate() {
            let mut rows = Vec::with_capacity(seeds.len());
            for (si, &seed) in seeds.iter().enumerate() {
                match &results[ai * seeds.len() + si].0[gi] {
                    Ok(row) => rows.push(row.clone()),
                    // The cell coordinates live in the Failure fields; keep
                    // only the underlying message.
                    Err(HarnessError::Run { message, .. }) => {
                        failures.push(Failure { alpha, sigma, seed, message: message.clone() })
                    }
                    Err(e) => {
                        failures.push(Failure { alpha, sigma, seed, message: e.to_string() })
                    }
                }
            }
            let aggregates = aggregate_rows(&rows);
            cells.push(RunRecord { alpha, sigma, rows, aggregates });
        }
    }

    let timings = jobs
        .iter()
        .zip(&results)
        .map(|(&(ai, si), (_, ms))| JobTiming {
            alpha: alphas[ai],
            seed: seeds[si],
            milliseconds: *ms,
        })
        .collect();

    SweepOutcome { cells, failures, timings }
}

/// Cross product of the config's sweep grid, all seeds.
pub fn sweep(config: &RunConfig) -> SweepOutcome {
    sweep_grid(config, &config.sweep.alphas, &config.sweep.sigmas)
}

/// Single-cell run at the config's own `(alpha, sigma)`, all seeds.
pub fn run_cell(config: &RunConfig) -> SweepOutcome {
    sweep_grid(config, &[config.alpha], &[config.sigma])
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

/// The four figure panels: `(metric, file stem, axis label)`.
const PLOT_PANELS: &[(&str, &str, &str)] = &[
    ("in_dist_loss", "in_dist_loss", "in-distribution loss"),
    ("ood_loss", "ood_loss", "OOD loss"),
    ("common_avg_sq_error", "common_error", "avg sq error, common features"),
    ("tail_avg_sq_error", "tail_error", "avg sq error, tail features"),
];

fn plot_series_csv(cells: &[RunRecord], metric: &str) -> String {
    let mut out = String::from("alpha,sigma,count,mean,var_of_mean,std_error\n");
    for cell in cells {
        if let Some(agg) = cell.aggregates.iter().find(|a| a.metric == metric) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.alpha,
                cell.sigma,
                agg.count,
                agg.mean,
                agg.var_of_mean,
                agg.std_error()
            ));
        }
    }
    out
}

fn plot_svg(cells: &[RunRecord], metric: &str, y_label: &str) -> String {
    // One series per sigma, in first-seen (grid) order.
    let mut sigmas: Vec<f64> = Vec::new();
    for cell in cells {
        if !sigmas.contains(&cell.sigma) {
            sigmas.push(cell.sigma);
        }
    }
    let series: Vec<Series> = sigmas
        .iter()
        .map(|&sigma| {
            let points = cells
                .iter()
                .filter(|c| c.sigma == sigma)
                .filter_map(|c| {
                    c.aggregates
                        .iter()
                        .find(|a| a.metric == metric)
                        .map(|a| (c.alpha, a.mean, a.std_error()))
                })
                .collect();
            Series { label: format!("sigma = {sigma}"), points }
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    line_chart_svg(y_label, "alpha", y_label, &series)
}

/// Write every output file for an executed grid. Plot emission is skipped
/// for single runs (`with_plots = false`). Returns the written paths.
pub fn write_outputs(
    config: &RunConfig,
    outcome: &SweepOutcome,
    with_plots: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)
        .map_err(|source| HarnessError::Io { path: dir.clone(), source })?;
    let mut written = Vec::new();

    let mut emit = |path: PathBuf, contents: String| -> Result<(), HarnessError> {
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };

    emit(dir.join("results.csv"), results_csv(&outcome.cells))?;
    emit(dir.join("aggregates.csv"), aggregates_csv(&outcome.cells))?;

    let failures_json =
        serde_json::to_string_pretty(&outcome.failures).expect("failures serialize");
    emit(dir.join("failures.json"), failures_json + "\n")?;

    let mut timings = String::from("alpha,seed,milliseconds\n");
    for t in &outcome.timings {
        timings.push_str(&format!("{},{},{}\n", t.alpha, t.seed, t.milliseconds));
    }
    emit(dir.join("timings.csv"), timings)?;

    emit(dir.join("config_used.toml"), config.to_toml_string())?;

    if with_plots {
        let plots = dir.join("plots");
        std::fs::create_dir_all(&plots)
            .map_err(|source| HarnessError::Io { path: plots.clone(), source })?;
        for &(metric, stem, label) in PLOT_PANELS {
            let csv = plot_series_csv(&outcome.cells, metric);
            // Panels whose metric never appears (e.g. OOD loss with
            // ood mode none) still get their CSV header for a stable
            // file set, but no chart.
            emit(plots.join(format!("{stem}.csv")), csv)?;
            let svg = plot_svg(&outcome.cells, metric, label);
            emit(plots.join(format!("{stem}.svg")), svg)?;
        }
    }

    Ok(written)
}
