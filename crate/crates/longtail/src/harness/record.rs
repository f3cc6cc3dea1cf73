//! One CSV row per `(alpha, sigma, seed)`, plus per-cell aggregation.

use std::fmt::Write as _;

use crate::datagen::{
    build_ground_truth, sample_design, select_singleton_features, ForcedSet, SampleSet,
};
use crate::diagnostics::{
    check_noisy_structure, recovery_checks, structure_report_with_tol, theorem_bounds,
    BoundInputs, NoisyStructureCheck, Regime, StructureReport,
};
use crate::distribution::{
    build_power_law, choose_threshold, tail_split, FeatureDistribution, KahanSum,
};
use crate::evaluation::{
    in_dist_loss_closed, monte_carlo_loss, ood_loss_closed, recovery_report,
};
use crate::rng::StreamKey;
use crate::solver::SupportFactor;

use super::config::{OodMode, RunConfig};
use super::HarnessError;

/// Column order of `results.csv`. Optional quantities print as empty cells;
/// list-valued cells join entries with `;`.
pub const RESULTS_HEADER: &str = "alpha,sigma,seed,n,d,s,c_k,beta_decay,\
k,saturated,p_head,p_tail,p_k,\
support_size,rank,sv_tolerance,residual_norm,y_norm,\
in_dist_loss,ood_t,ood_indices,ood_loss,\
mc_draws,mc_in_dist,mc_in_dist_se,mc_ood,mc_ood_se,\
common_avg_sq_error,common_avg_abs_error,tail_avg_sq_error,tail_avg_abs_error,\
recovered_fraction,tail_observed_count,\
s0_count,s1_count,s_ge2_count,f_size,f0_size,f1_size,f01_union_size,\
singleton_tail_count,s0_rank,singleton_ok_count,singleton_max_sq_err,\
np_tail_sq,noisy_check_applicable,noisy_check_passed,expected_s_ge2,\
general_bound,power_law_bound,ood_bound,fhat_deficit,\
in_dist_to_general_ratio,ood_to_bound_ratio,checks_failed";

/// Everything measured on one fitted run.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRow {
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub s: f64,
    pub c_k: f64,
    pub beta_decay: f64,
    pub k: usize,
    pub saturated: bool,
    pub p_head: f64,
    pub p_tail: f64,
    pub p_k: f64,
    pub support_size: usize,
    pub rank: usize,
    pub sv_tolerance: f64,
    pub residual_norm: f64,
    pub y_norm: f64,
    pub in_dist_loss: f64,
    pub ood_t: usize,
    pub ood_indices: Vec<u32>,
    pub ood_loss: Option<f64>,
    pub mc_draws: Option<usize>,
    pub mc_in_dist: Option<f64>,
    pub mc_in_dist_se: Option<f64>,
    pub mc_ood: Option<f64>,
    pub mc_ood_se: Option<f64>,
    pub common_avg_sq_error: f64,
    pub common_avg_abs_error: f64,
    pub tail_avg_sq_error: f64,
    pub tail_avg_abs_error: f64,
    pub recovered_fraction: f64,
    pub tail_observed_count: usize,
    pub s0_count: usize,
    pub s1_count: usize,
    pub s_ge2_count: usize,
    pub f_size: usize,
    pub f0_size: usize,
    pub f1_size: usize,
    pub f01_union_size: usize,
    pub singleton_tail_count: usize,
    pub s0_rank: usize,
    pub singleton_ok_count: usize,
    pub singleton_max_sq_err: f64,
    pub np_tail_sq: f64,
    pub noisy_check_applicable: bool,
    pub noisy_check_passed: Option<bool>,
    pub expected_s_ge2: f64,
    pub general_bound: f64,
    pub power_law_bound: Option<f64>,
    pub ood_bound: f64,
    pub fhat_deficit: f64,
    pub in_dist_to_general_ratio: Option<f64>,
    pub ood_to_bound_ratio: Option<f64>,
    pub checks_failed: Vec<&'static str>,
}

fn cell_f64(v: f64) -> String {
    format!("{v}")
}

fn cell_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), |x| x.to_string())
}

impl SeedRow {
    /// The row in `RESULTS_HEADER` order.
    pub fn csv_line(&self) -> String {
        let cells: Vec<String> = vec![
            cell_f64(self.alpha),
            cell_f64(self.sigma),
            self.seed.to_string(),
            self.n.to_string(),
            self.d.to_string(),
            cell_f64(self.s),
            cell_f64(self.c_k),
            cell_f64(self.beta_decay),
            self.k.to_string(),
            self.saturated.to_string(),
            cell_f64(self.p_head),
            cell_f64(self.p_tail),
            cell_f64(self.p_k),
            self.support_size.to_string(),
            self.rank.to_string(),
            cell_f64(self.sv_tolerance),
            cell_f64(self.residual_norm),
            cell_f64(self.y_norm),
            cell_f64(self.in_dist_loss),
            self.ood_t.to_string(),
            self.ood_indices.iter().map(u32::to_string).collect::<Vec<_>>().join(";"),
            cell_opt(&self.ood_loss),
            cell_opt(&self.mc_draws),
            cell_opt(&self.mc_in_dist),
            cell_opt(&self.mc_in_dist_se),
            cell_opt(&self.mc_ood),
            cell_opt(&self.mc_ood_se),
            cell_f64(self.common_avg_sq_error),
            cell_f64(self.common_avg_abs_error),
            cell_f64(self.tail_avg_sq_error),
            cell_f64(self.tail_avg_abs_error),
            cell_f64(self.recovered_fraction),
            self.tail_observed_count.to_string(),
            self.s0_count.to_string(),
            self.s1_count.to_string(),
            self.s_ge2_count.to_string(),
            self.f_size.to_string(),
            self.f0_size.to_string(),
            self.f1_size.to_string(),
            self.f01_union_size.to_string(),
            self.singleton_tail_count.to_string(),
            self.s0_rank.to_string(),
            self.singleton_ok_count.to_string(),
            cell_f64(self.singleton_max_sq_err),
            cell_f64(self.np_tail_sq),
            self.noisy_check_applicable.to_string(),
            cell_opt(&self.noisy_check_passed),
            cell_f64(self.expected_s_ge2),
            cell_f64(self.general_bound),
            cell_opt(&self.power_law_bound),
            cell_f64(self.ood_bound),
            cell_f64(self.fhat_deficit),
            cell_opt(&self.in_dist_to_general_ratio),
            cell_opt(&self.ood_to_bound_ratio),
            self.checks_failed.join(";"),
        ];
        cells.join(",")
    }

    /// Numeric value of a named aggregate metric, when defined for this row.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "in_dist_loss" => Some(self.in_dist_loss),
            "ood_loss" => self.ood_loss,
            "mc_in_dist" => self.mc_in_dist,
            "mc_ood" => self.mc_ood,
            "common_avg_sq_error" => Some(self.common_avg_sq_error),
            "common_avg_abs_error" => Some(self.common_avg_abs_error),
            "tail_avg_sq_error" => Some(self.tail_avg_sq_error),
            "tail_avg_abs_error" => Some(self.tail_avg_abs_error),
            "recovered_fraction" => Some(self.recovered_fraction),
            "residual_norm" => Some(self.residual_norm),
            "support_size" => Some(self.support_size as f64),
            "rank" => Some(self.rank as f64),
            "s0_count" => Some(self.s0_count as f64),
            "s1_count" => Some(self.s1_count as f64),
            "s_ge2_count" => Some(self.s_ge2_count as f64),
            "f_size" => Some(self.f_size as f64),
            "singleton_tail_count" => Some(self.singleton_tail_count as f64),
            "s0_rank" => Some(self.s0_rank as f64),
            "singleton_ok_fraction" => (self.singleton_tail_count > 0)
                .then(|| self.singleton_ok_count as f64 / self.singleton_tail_count as f64),
            "general_bound" => Some(self.general_bound),
            "power_law_bound" => self.power_law_bound,
            "ood_bound" => Some(self.ood_bound),
            "fhat_deficit" => Some(self.fhat_deficit),
            "in_dist_to_general_ratio" => self.in_dist_to_general_ratio,
            "ood_to_bound_ratio" => self.ood_to_bound_ratio,
            _ => None,
        }
    }
}

/// Metrics aggregated per cell in `aggregates.csv`.
pub const AGGREGATE_METRICS: &[&str] = &[
    "in_dist_loss",
    "ood_loss",
    "mc_in_dist",
    "mc_ood",
    "common_avg_sq_error",
    "common_avg_abs_error",
    "tail_avg_sq_error",
    "tail_avg_abs_error",
    "recovered_fraction",
    "residual_norm",
    "support_size",
    "rank",
    "s0_count",
    "s1_count",
    "s_ge2_count",
    "f_size",
    "singleton_tail_count",
    "s0_rank",
    "singleton_ok_fraction",
    "general_bound",
    "power_law_bound",
    "ood_bound",
    "fhat_deficit",
    "in_dist_to_general_ratio",
    "ood_to_bound_ratio",
];

/// Mean and variance of the mean for one metric over a cell's seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAggregate {
    pub metric: &'static str,
    pub count: usize,
    pub mean: f64,
    pub var_of_mean: f64,
}

impl MetricAggregate {
    pub fn std_error(&self) -> f64 {
        self.var_of_mean.sqrt()
    }
}

/// Two-pass mean and variance-of-mean per metric; metrics absent from every
/// row are dropped.
pub fn aggregate_rows(rows: &[SeedRow]) -> Vec<MetricAggregate> {
    let mut out = Vec::new();
    for &metric in AGGREGATE_METRICS {
        let values: Vec<f64> = rows.iter().filter_map(|r| r.metric(metric)).collect();
        if values.is_empty() {
            continue;
        }
        let count = values.len();
        let mut sum = KahanSum::default();
        for &v in &values {
            sum.add(v);
        }
        let mean = sum.value() / count as f64;
        let var_of_mean = if count > 1 {
            let mut sq = KahanSum::default();
            for &v in &values {
                sq.add((v - mean) * (v - mean));
            }
            sq.value() / (count - 1) as f64 / count as f64
        } else {
            0.0
        };
        out.push(MetricAggregate { metric, count, mean, var_of_mean });
    }
    out
}

/// One grid cell: every seed's row plus the cell aggregates.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub alpha: f64,
    pub sigma: f64,
    pub rows: Vec<SeedRow>,
    pub aggregates: Vec<MetricAggregate>,
}

struct SharedState {
    dist: FeatureDistribution,
    truth: crate::datagen::GroundTruth,
    k: usize,
    saturated: bool,
    p_head: f64,
    p_tail: f64,
    p_k: f64,
    draw: crate::datagen::SampleDraw,
    factor: SupportFactor,
    structure: StructureReport,
    noisy_check: NoisyStructureCheck,
    forced: Option<ForcedSet>,
}

fn build_shared(config: &RunConfig, alpha: f64, seed: u64) -> Result<SharedState, String> {
    let dist = match &config.explicit_p {
        Some(p) => {
            FeatureDistribution::from_probabilities(p.clone()).map_err(|e| e.to_string())?
        }
        None => build_power_law(config.d, config.s, alpha).map_err(|e| e.to_string())?,
    };
    let truth = build_ground_truth(config.d, config.beta_decay);
    let choice = choose_threshold(&dist, config.n, config.c_k).map_err(|e| e.to_string())?;
    let split = tail_split(&dist, choice.k).map_err(|e| e.to_string())?;
    let p_k = dist.prob(choice.k);
    let draw = sample_design(&dist, &truth, config.n, seed);
    // Rows do not depend on sigma; any noise level works for the
    // sigma-independent stages.
    let base: SampleSet = draw.with_sigma(0.0);
    let factor = SupportFactor::new(&base, config.sv_rel_tol).map_err(|e| e.to_string())?;
    let structure = structure_report_with_tol(&base, choice.k, config.sv_rel_tol);
    let noisy_check = check_noisy_structure(&structure, &dist, config.n);
    let forced = match &config.ood {
        OodMode::Singletons { t } => {
            let mut stream = StreamKey::from_seed(seed).label("oodselect").stream();
            Some(
                select_singleton_features(&base, choice.k, *t, &mut stream)
                    .map_err(|e| e.to_string())?,
            )
        }
        OodMode::Explicit { indices } => {
            Some(ForcedSet::new(indices.clone(), config.d).map_err(|e| e.to_string())?)
        }
        OodMode::None => None,
    };
    Ok(SharedState {
        dist,
        truth,
        k: choice.k,
        saturated: choice.saturated,
        p_head: split.p_head,
        p_tail: split.p_tail,
        p_k,
        draw,
        factor,
        structure,
        noisy_check,
        forced,
    })
}

fn run_sigma(
    config: &RunConfig,
    alpha: f64,
    sigma: f64,
    seed: u64,
    sh: &SharedState,
) -> Result<SeedRow, String> {
    let set = sh.draw.with_sigma(sigma);
    let est = sh.factor.solve(&set).map_err(|e| e.to_string())?;

    let in_dist_loss = in_dist_loss_closed(&est, &sh.truth, &sh.dist);
    let ood_loss = sh.forced.as_ref().map(|f| ood_loss_closed(&est, &sh.truth, &sh.dist, f));

    let (mc_in_dist, mc_in_dist_se, mc_ood, mc_ood_se) = match config.mc_draws {
        Some(draws) => {
            let key = StreamKey::from_seed(seed).label("mc");
            let mc = monte_carlo_loss(&est, &sh.truth, &sh.dist, None, draws, key.label("indist"));
            let (om, os) = match &sh.forced {
                Some(f) => {
                    let mc = monte_carlo_loss(
                        &est,
                        &sh.truth,
                        &sh.dist,
                        Some(f),
                        draws,
                        key.label("ood"),
                    );
                    (Some(mc.mean), Some(mc.std_error))
                }
                None => (None, None),
            };
            (Some(mc.mean), Some(mc.std_error), om, os)
        }
        None => (None, None, None, None),
    };

    let recovery = recovery_report(&est, &sh.truth, sh.k, config.recovery_tolerance(sigma));

    let bounds = theorem_bounds(&BoundInputs {
        n: config.n,
        d: config.d,
        k: sh.k,
        sigma,
        p_tail: sh.p_tail,
        p_k: sh.p_k,
        t: sh.forced.as_ref().map_or(0, ForcedSet::len),
        power_law: config.explicit_p.is_none().then_some((config.s, alpha)),
    })
    .map_err(|e| e.to_string())?;

    let regime = Regime::from_sigma(sigma);
    let checks = recovery_checks(&set, &est, &sh.truth, &sh.structure, regime);
    let checks_failed: Vec<&'static str> =
        checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();

    // Per-singleton recovery census for the noise-envelope statistics.
    let singleton_tol = if sigma > 0.0 {
        10.0 * sigma * (config.d as f64).ln().sqrt()
    } else {
        1e-6
    };
    let mut singleton_ok_count = 0usize;
    let mut singleton_max_sq_err = 0.0f64;
    for &(i, c) in &sh.structure.appearance_counts {
        if c == 1 && i as usize > sh.k {
            let delta = est.coefficient(i) - sh.truth.value(i as usize);
            if delta.abs() <= singleton_tol {
                singleton_ok_count += 1;
            }
            singleton_max_sq_err = singleton_max_sq_err.max(delta * delta);
        }
    }

    let mut y_sq = KahanSum::default();
    for &v in &set.y {
        y_sq.add(v * v);
    }
    let y_norm = y_sq.value().sqrt();

    let ratio = |loss: f64, bound: f64| (bound > 0.0).then(|| loss / bound);

    Ok(SeedRow {
        alpha,
        sigma,
        seed,
        n: config.n,
        d: config.d,
        s: config.s,
        c_k: config.c_k,
        beta_decay: config.beta_decay,
        k: sh.k,
        saturated: sh.saturated,
        p_head: sh.p_head,
        p_tail: sh.p_tail,
        p_k: sh.p_k,
        support_size: est.support().len(),
        rank: est.rank(),
        sv_tolerance: est.sv_tolerance(),
        residual_norm: est.residual_norm(),
        y_norm,
        in_dist_loss,
        ood_t: sh.forced.as_ref().map_or(0, ForcedSet::len),
        ood_indices: sh.forced.as_ref().map_or_else(Vec::new, |f| f.indices().to_vec()),
        ood_loss,
        mc_draws: config.mc_draws,
        mc_in_dist,
        mc_in_dist_se,
        mc_ood,
        mc_ood_se,
        common_avg_sq_error: recovery.common_avg_sq_error,
        common_avg_abs_error: recovery.common_avg_abs_error,
        tail_avg_sq_error: recovery.tail_avg_sq_error,
        tail_avg_abs_error: recovery.tail_avg_abs_error,
        recovered_fraction: recovery.recovered_fraction,
        tail_observed_count: recovery.tail_observed_count,
        s0_count: sh.structure.s0_count,
        s1_count: sh.structure.s1_count,
        s_ge2_count: sh.structure.s_ge2_count,
        f_size: sh.structure.f_size,
        f0_size: sh.structure.f0_size,
        f1_size: sh.structure.f1_size,
        f01_union_size: sh.structure.f01_union_size,
        singleton_tail_count: sh.structure.singleton_tail_count,
        s0_rank: sh.structure.s0_rank,
        singleton_ok_count,
        singleton_max_sq_err,
        np_tail_sq: sh.noisy_check.np_tail_sq,
        noisy_check_applicable: sh.noisy_check.applicable,
        noisy_check_passed: sh.noisy_check.passed,
        expected_s_ge2: sh.noisy_check.expected_s_ge2,
        general_bound: bounds.general_bound,
        power_law_bound: bounds.power_law_bound,
        ood_bound: bounds.ood_bound,
        fhat_deficit: bounds.fhat_deficit,
        in_dist_to_general_ratio: ratio(in_dist_loss, bounds.general_bound),
        ood_to_bound_ratio: ood_loss.and_then(|l| ratio(l, bounds.ood_bound)),
        checks_failed,
    })
}

/// Execute every sigma of one `(alpha, seed)` job against a single shared
/// design factorization. The result vector aligns with `sigmas`.
pub fn run_job(
    config: &RunConfig,
    alpha: f64,
    sigmas: &[f64],
    seed: u64,
) -> Vec<Result<SeedRow, HarnessError>> {
    assert!(!sigmas.is_empty(), "job needs at least one sigma");
    let wrap = |sigma: f64, message: String| HarnessError::Run { alpha, sigma, seed, message };
    match build_shared(config, alpha, seed) {
        Err(message) => sigmas.iter().map(|&s| Err(wrap(s, message.clone()))).collect(),
        Ok(sh) => sigmas
            .iter()
            .map(|&sigma| run_sigma(config, alpha, sigma, seed, &sh).map_err(|m| wrap(sigma, m)))
            .collect(),
    }
}

/// One pipeline pass at the config's own `(alpha, sigma)`.
pub fn run_one(config: &RunConfig, seed: u64) -> Result<SeedRow, HarnessError> {
    run_job(config, config.alpha, &[config.sigma], seed)
        .pop()
        .expect("one sigma in, one row out")
}

/// Render `aggregates.csv` content for a list of cells.
pub fn aggregates_csv(cells: &[RunRecord]) -> String {
    let mut out = String::from("alpha,sigma,metric,count,mean,var_of_mean,std_error\n");
    for cell in cells {
        for agg in &cell.aggregates {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                cell.alpha,
                cell.sigma,
                agg.metric,
                agg.count,
                agg.mean,
                agg.var_of_mean,
                agg.std_error()
            )
            .expect("string write");
        }
    }
    out
}

/// Render `results.csv` content for a list of cells.
pub fn results_csv(cells: &[RunRecord]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for cell in cells {
        for row in &cell.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
    }
    out
}
