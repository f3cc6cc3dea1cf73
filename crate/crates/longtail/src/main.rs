//! Command-line front end. Every subcommand prints one JSON document on
//! stdout and exits 0; any failure prints `{"error":{"kind","message"}}`
//! on stderr and exits nonzero (2 for usage errors, 1 otherwise).
//!
//! Configuration precedence: built-in defaults, then `--config` file, then
//! the `LONGTAIL_OUTPUT_DIR` environment variable, then individual flags.
//! `LONGTAIL_THREADS` caps the worker pool; by default all cores are used.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use longtail::datagen::{
    build_ground_truth, sample_dataset, select_singleton_features, DatagenError, ForcedSet,
    GroundTruth, SampleSet,
};
use longtail::diagnostics::{
    check_noisy_structure, recovery_checks, structure_report_with_tol, theorem_bounds,
    BoundInputs, DiagnosticsError, Regime,
};
use longtail::distribution::{
    build_power_law, choose_threshold, tail_split, DistributionError, FeatureDistribution,
};
use longtail::evaluation::{
    in_dist_loss_closed, monte_carlo_loss, ood_loss_closed, recovery_report, EvalReport, OodEval,
};
use longtail::formats::{load_estimate, load_samples, save_estimate, save_samples, FormatError};
use longtail::harness::{
    run_cell, sweep, write_outputs, HarnessError, OodMode, RunConfig, SweepOutcome,
};
use longtail::rng::StreamKey;
use longtail::solver::{min_norm_solve, SolverError};

#[derive(Parser)]
#[command(
    name = "longtail",
    version,
    about = "Minimum-norm regression on long-tail sparse designs: sample, solve, evaluate, sweep"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write it to a samples file.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Seed for the draw; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Destination samples file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the minimum-norm interpolator to a samples file.
    Solve {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input samples file.
        #[arg(long)]
        samples: PathBuf,
        /// Destination estimate file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form losses and recovery metrics for a fitted estimate.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Samples file the estimate was fitted on.
        #[arg(long)]
        samples: PathBuf,
        /// Estimate file to evaluate.
        #[arg(long)]
        estimate: PathBuf,
    },
    /// Combinatorial structure census and regime checks for a dataset.
    Diagnose {
        #[command(flatten)]
        config: ConfigArgs,
        /// Samples file to diagnose.
        #[arg(long)]
        samples: PathBuf,
        /// Optional estimate file; adds recovery checks to the report.
        #[arg(long)]
        estimate: Option<PathBuf>,
    },
    /// Evaluate the generalization bound expressions for a configuration.
    Bounds {
        #[command(flatten)]
        config: ConfigArgs,
        /// Common-feature count; derived from the configuration if omitted.
        #[arg(long)]
        k: Option<usize>,
        /// Tail mass beyond k; derived if omitted.
        #[arg(long = "p-tail")]
        p_tail: Option<f64>,
        /// Appearance probability of feature k; derived if omitted.
        #[arg(long = "p-k")]
        p_k: Option<f64>,
        /// Forced-set size; defaults to the configured OOD mode's size.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Run the full pipeline for one (alpha, sigma) cell over all seeds.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the full (alpha, sigma) grid and emit plot files.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Flags mirroring the config file; any flag overrides the loaded value.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ambient dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Sample count.
    #[arg(long)]
    n: Option<usize>,
    /// Expected nonzeros per sample.
    #[arg(long)]
    s: Option<f64>,
    /// Power-law exponent of the appearance probabilities.
    #[arg(long)]
    alpha: Option<f64>,
    /// Label noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Common/tail threshold target: k is minimal with n*p_k <= c_k.
    #[arg(long = "c-k")]
    c_k: Option<f64>,
    /// Ground-truth decay: beta*_i = i^(-beta_decay).
    #[arg(long = "beta-decay")]
    beta_decay: Option<f64>,
    /// Use seeds 1..=n_seeds when no explicit seed list is given.
    #[arg(long = "n-seeds")]
    n_seeds: Option<usize>,
    /// Explicit comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Monte Carlo draws for loss cross-checks; omitted disables them.
    #[arg(long = "mc-draws")]
    mc_draws: Option<usize>,
    /// Recovery tolerance override.
    #[arg(long = "tol-rec")]
    tol_rec: Option<f64>,
    /// Relative singular value cutoff.
    #[arg(long = "sv-rel-tol")]
    sv_rel_tol: Option<f64>,
    /// Output directory for run and sweep artifacts.
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
    /// OOD mode: force t random tail singletons.
    #[arg(long = "ood-t", conflicts_with_all = ["ood_indices", "ood_none"])]
    ood_t: Option<usize>,
    /// OOD mode: force an explicit comma-separated feature list.
    #[arg(long = "ood-indices", value_delimiter = ',', conflicts_with = "ood_none")]
    ood_indices: Option<Vec<u32>>,
    /// OOD mode: skip the out-of-distribution evaluation.
    #[arg(long = "ood-none")]
    ood_none: bool,
    /// Sweep grid alphas, comma separated.
    #[arg(long = "sweep-alphas", value_delimiter = ',')]
    sweep_alphas: Option<Vec<f64>>,
    /// Sweep grid sigmas, comma separated.
    #[arg(long = "sweep-sigmas", value_delimiter = ',')]
    sweep_sigmas: Option<Vec<f64>>,
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let kind = match e {
            FormatError::Io(_) => "io",
            FormatError::Parse { .. } => "format",
        };
        CliError::new(kind, e.to_string())
    }
}

/// File-format results gain the offending path; the bare error has none.
fn with_path<T>(r: Result<T, FormatError>, path: &std::path::Path) -> Result<T, CliError> {
    r.map_err(|e| {
        let base = CliError::from(e);
        CliError::new(base.kind, format!("{}: {}", path.display(), base.message))
    })
}

impl From<DistributionError> for CliError {
    fn from(e: DistributionError) -> Self {
        CliError::new("distribution", e.to_string())
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        CliError::new("datagen", e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::new("solver", e.to_string())
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        CliError::new("diagnostics", e.to_string())
    }
}

impl ConfigArgs {
    /// Defaults, then the config file, then the environment, then flags.
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::new("io", format!("{}: {e}", path.display()))
                })?;
                toml::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::new("config", e.to_string()))?
            }
            None => RunConfig::default(),
        };
        if let Ok(dir) = std::env::var("LONGTAIL_OUTPUT_DIR") {
            config.output_dir = dir;
        }
        if let Some(d) = self.d {
            config.d = d;
        }
        if let Some(n) = self.n {
            config.n = n;
        }
        if let Some(s) = self.s {
            config.s = s;
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(sigma) = self.sigma {
            config.sigma = sigma;
        }
        if let Some(c_k) = self.c_k {
            config.c_k = c_k;
        }
        if let Some(decay) = self.beta_decay {
            config.beta_decay = decay;
        }
        if let Some(n_seeds) = self.n_seeds {
            config.n_seeds = n_seeds;
        }
        if let Some(seeds) = &self.seeds {
            config.seeds = Some(seeds.clone());
        }
        if let Some(draws) = self.mc_draws {
            config.mc_draws = Some(draws);
        }
        if let Some(tol) = self.tol_rec {
            config.tol_rec = Some(tol);
        }
        if let Some(tol) = self.sv_rel_tol {
            config.sv_rel_tol = tol;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.display().to_string();
        }
        if self.ood_none {
            config.ood = OodMode::None;
        } else if let Some(indices) = &self.ood_indices {
            config.ood = OodMode::Explicit { indices: indices.clone() };
        } else if let Some(t) = self.ood_t {
            config.ood = OodMode::Singletons { t };
        }
        if let Some(alphas) = &self.sweep_alphas {
            config.sweep.alphas = alphas.clone();
        }
        if let Some(sigmas) = &self.sweep_sigmas {
            config.sweep.sigmas = sigmas.clone();
        }
        config.validate()?;
        Ok(config)
    }

    /// True when the flag (not the config file) pinned the field.
    fn pinned_shape(&self) -> (bool, bool, bool) {
        (self.d.is_some(), self.n.is_some(), self.sigma.is_some())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            let payload = json!({"error": {"kind": "usage", "message": err.to_string()}});
            eprintln!("{payload}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": {"kind": e.kind, "message": e.message}}));
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_thread_pool()?;
    match cli.command {
        Command::Generate { config, seed, out } => generate(&config, seed, &out),
        Command::Solve { config, samples, out } => solve(&config, &samples, &out),
        Command::Evaluate { config, samples, estimate } => evaluate(&config, &samples, &estimate),
        Command::Diagnose { config, samples, estimate } => {
            diagnose(&config, &samples, estimate.as_deref())
        }
        Command::Bounds { config, k, p_tail, p_k, t } => bounds(&config, k, p_tail, p_k, t),
        Command::Run { config } => run(&config),
        Command::Sweep { config } => run_sweep(&config),
    }
}

fn init_thread_pool() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LONGTAIL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::new("config", format!("LONGTAIL_THREADS must be a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::new("config", e.to_string()))
}

/// Appearance distribution implied by the config: explicit probabilities
/// when given, otherwise the power law at the config's alpha.
fn distribution_of(config: &RunConfig) -> Result<FeatureDistribution, CliError> {
    match &config.explicit_p {
        Some(p) => Ok(FeatureDistribution::from_probabilities(p.clone())?),
        None => Ok(build_power_law(config.d, config.s, config.alpha)?),
    }
}

fn generate(args: &ConfigArgs, seed: Option<u64>, out: &std::path::Path) -> Result<(), CliError> {
    let config = args.resolve()?;
    let seed = seed.unwrap_or_else(|| config.effective_seeds()[0]);
    let dist = distribution_of(&config)?;
    let truth = build_ground_truth(config.d, config.beta_decay);
    let samples = sample_dataset(&dist, &truth, config.n, config.sigma, seed);
    with_path(save_samples(out, &samples), out)?;
    let nonzeros: usize = samples.rows.iter().map(|r| r.nnz()).sum();
    println!(
        "{}",
        json!({
            "command": "generate",
            "path": out,
            "n": samples.n,
            "d": samples.d,
            "sigma": samples.sigma,
            "seed": samples.seed,
            "nonzeros": nonzeros,
        })
    );
    Ok(())
}

fn solve(args: &ConfigArgs, samples_path: &std::path::Path, out: &std::path::Path) -> Result<(), CliError> {
    let config = args.resolve()?;
    let samples = with_path(load_samples(samples_path), samples_path)?;
    let est = min_norm_solve(&samples, config.sv_rel_tol)?;
    with_path(save_estimate(out, &est), out)?;
    println!(
        "{}",
        json!({
            "command": "solve",
            "path": out,
            "n": samples.n,
            "d": samples.d,
            "support_size": est.support().len(),
            "rank": est.rank(),
            "sv_tolerance": est.sv_tolerance(),
            "residual_norm": est.residual_norm(),
            "norm": est.norm(),
        })
    );
    Ok(())
}

/// Rebuild the model context around a samples file: the file pins (n, d,
/// sigma); flags may restate them but must agree.
fn adopt_shape(args: &ConfigArgs, samples: &SampleSet) -> Result<RunConfig, CliError> {
    let mut config = args.resolve()?;
    let (d_pinned, n_pinned, sigma_pinned) = args.pinned_shape();
    if d_pinned && config.d != samples.d {
        return Err(CliError::new(
            "config",
            format!("--d {} conflicts with the samples file (d={})", config.d, samples.d),
        ));
    }
    if n_pinned && config.n != samples.n {
        return Err(CliError::new(
            "config",
            format!("--n {} conflicts with the samples file (n={})", config.n, samples.n),
        ));
    }
    if sigma_pinned && config.sigma != samples.sigma {
        return Err(CliError::new(
            "config",
            format!("--sigma {} conflicts with the samples file (sigma={})", config.sigma, samples.sigma),
        ));
    }
    config.d = samples.d;
    config.n = samples.n;
    config.sigma = samples.sigma;
    config.validate()?;
    Ok(config)
}

fn forced_set_of(
    config: &RunConfig,
    samples: &SampleSet,
    k: usize,
) -> Result<Option<ForcedSet>, CliError> {
    match &config.ood {
        OodMode::Singletons { t } => {
            let mut stream = StreamKey::from_seed(samples.seed).label("oodselect").stream();
            Ok(Some(select_singleton_features(samples, k, *t, &mut stream)?))
        }
        OodMode::Explicit { indices } => Ok(Some(ForcedSet::new(indices.clone(), config.d)?)),
        OodMode::None => Ok(None),
    }
}

fn evaluate(
    args: &ConfigArgs,
    samples_path: &std::path::Path,
    estimate_path: &std::path::Path,
) -> Result<(), CliError> {
    let samples = with_path(load_samples(samples_path), samples_path)?;
    let est = with_path(load_estimate(estimate_path), estimate_path)?;
    if est.d() != samples.d {
        return Err(CliError::new(
            "format",
            format!("estimate dimension {} does not match samples dimension {}", est.d(), samples.d),
        ));
    }
    let config = adopt_shape(args, &samples)?;
    let dist = distribution_of(&config)?;
    let truth: GroundTruth = build_ground_truth(config.d, config.beta_decay);
    let choice = choose_threshold(&dist, samples.n, config.c_k)?;
    let forced = forced_set_of(&config, &samples, choice.k)?;

    let in_dist_loss = in_dist_loss_closed(&est, &truth, &dist);
    let mc_key = StreamKey::from_seed(samples.seed).label("mc");
    let mc_in_dist = config
        .mc_draws
        .map(|draws| monte_carlo_loss(&est, &truth, &dist, None, draws, mc_key.label("indist")));
    let ood = forced.map(|forced| {
        let loss = ood_loss_closed(&est, &truth, &dist, &forced);
        let mc = config.mc_draws.map(|draws| {
            monte_carlo_loss(&est, &truth, &dist, Some(&forced), draws, mc_key.label("ood"))
        });
        OodEval { forced, loss, mc }
    });
    let recovery =
        recovery_report(&est, &truth, choice.k, config.recovery_tolerance(samples.sigma));
    let report = EvalReport { in_dist_loss, mc_in_dist, ood, recovery };
    println!(
        "{}",
        json!({
            "command": "evaluate",
            "k": choice.k,
            "saturated": choice.saturated,
            "report": report,
        })
    );
    Ok(())
}

fn diagnose(
    args: &ConfigArgs,
    samples_path: &std::path::Path,
    estimate_path: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let samples = with_path(load_samples(samples_path), samples_path)?;
    let config = adopt_shape(args, &samples)?;
    let dist = distribution_of(&config)?;
    let choice = choose_threshold(&dist, samples.n, config.c_k)?;
    let split = tail_split(&dist, choice.k)?;
    let structure = structure_report_with_tol(&samples, choice.k, config.sv_rel_tol);
    let noisy_check = check_noisy_structure(&structure, &dist, samples.n);
    let checks = match estimate_path {
        Some(path) => {
            let est = with_path(load_estimate(path), path)?;
            if est.d() != samples.d {
                return Err(CliError::new(
                    "format",
                    format!(
                        "estimate dimension {} does not match samples dimension {}",
                        est.d(),
                        samples.d
                    ),
                ));
            }
            let truth = build_ground_truth(config.d, config.beta_decay);
            let regime = Regime::from_sigma(samples.sigma);
            Some(recovery_checks(&samples, &est, &truth, &structure, regime))
        }
        None => None,
    };
    println!(
        "{}",
        json!({
            "command": "diagnose",
            "k": choice.k,
            "saturated": choice.saturated,
            "p_tail": split.p_tail,
            "structure": structure,
            "noisy_check": noisy_check,
            "recovery_checks": checks,
        })
    );
    Ok(())
}

fn bounds(
    args: &ConfigArgs,
    k: Option<usize>,
    p_tail: Option<f64>,
    p_k: Option<f64>,
    t: Option<usize>,
) -> Result<(), CliError> {
    let config = args.resolve()?;
    // Derive whatever the flags left open from the configured distribution.
    let (k, p_tail, p_k) = match (k, p_tail, p_k) {
        (Some(k), Some(p_tail), Some(p_k)) => (k, p_tail, p_k),
        (k_flag, p_tail_flag, p_k_flag) => {
            let dist = distribution_of(&config)?;
            let choice = choose_threshold(&dist, config.n, config.c_k)?;
            let k = k_flag.unwrap_or(choice.k);
            let split = tail_split(&dist, k)?;
            (k, p_tail_flag.unwrap_or(split.p_tail), p_k_flag.unwrap_or(dist.prob(k)))
        }
    };
    let t = t.unwrap_or(match &config.ood {
        OodMode::Singletons { t } => *t,
        OodMode::Explicit { indices } => indices.len(),
        OodMode::None => 0,
    });
    let inputs = BoundInputs {
        n: config.n,
        d: config.d,
        k,
        sigma: config.sigma,
        p_tail,
        p_k,
        t,
        power_law: config.explicit_p.is_none().then_some((config.s, config.alpha)),
    };
    let report = theorem_bounds(&inputs)?;
    println!("{}", json!({"command": "bounds", "report": report}));
    Ok(())
}

/// Shared summary shape for `run` and `sweep`.
fn report_outcome(
    command: &str,
    config: &RunConfig,
    outcome: &SweepOutcome,
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let rows: usize = outcome.cells.iter().map(|c| c.rows.len()).sum();
    if rows == 0 {
        let detail = outcome
            .failures
            .first()
            .map(|f| format!("alpha={} sigma={} seed={}: {}", f.alpha, f.sigma, f.seed, f.message))
            .unwrap_or_else(|| "empty grid".to_string());
        return Err(CliError::new("run", format!("all cells failed; first failure: {detail}")));
    }
    let mut headline = serde_json::Map::new();
    for metric in ["in_dist_loss", "ood_loss", "common_avg_sq_error", "tail_avg_sq_error"] {
        let means: Vec<serde_json::Value> = outcome
            .cells
            .iter()
            .filter_map(|cell| {
                cell.aggregates.iter().find(|a| a.metric == metric).map(|a| {
                    json!({
                        "alpha": cell.alpha,
                        "sigma": cell.sigma,
                        "mean": a.mean,
                        "std_error": a.std_error(),
                    })
                })
            })
            .collect();
        if !means.is_empty() {
            headline.insert(metric.to_string(), serde_json::Value::Array(means));
        }
    }
    println!(
        "{}",
        json!({
            "command": command,
            "output_dir": config.output_dir,
            "cells": outcome.cells.len(),
            "rows": rows,
            "failures": outcome.failures.len(),
            "outputs": outputs,
            "aggregates": headline,
        })
    );
    Ok(())
}

fn run(args: &ConfigArgs) -> Result<(), CliError> {
    let config = args.resolve()?;
    let outcome = run_cell(&config);
    let outputs = write_outputs(&config, &outcome, false)?;
    report_outcome("run", &config, &outcome, &outputs)
}

fn run_sweep(args: &ConfigArgs) -> Result<(), CliError> {
    let config = args.resolve()?;
    let outcome = sweep(&config);
    let outputs = write_outputs(&config, &outcome, true)?;
    report_outcome("sweep", &config, &outcome, &outputs)
}
