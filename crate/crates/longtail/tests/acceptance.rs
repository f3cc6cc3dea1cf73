//! Acceptance gate. One test per criterion; each prints a single
//! `criterion N: PASS/FAIL` line with the measured quantities (run with
//! `-- --nocapture` to see the lines for passing tests too).
//!
//! Criteria 2, 4, 5, 6 read one shared full-scale sweep (d = 10000,
//! n = 1000, s = 5, alphas {1.0, 1.5, 2.0, 2.5}, sigmas {0, 0.05, 0.1},
//! seeds 1..=50) computed once per process; criterion 7 recomputes the
//! whole sweep independently and compares artifacts byte for byte.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{gram_min_norm, linf_gap, small_instance};
use longtail::datagen::{build_ground_truth, sample_dataset, select_singleton_features};
use longtail::distribution::{build_power_law, choose_threshold};
use longtail::evaluation::{in_dist_loss_closed, monte_carlo_loss, ood_loss_closed};
use longtail::harness::{sweep, write_outputs, OodMode, RunConfig, RunRecord, SweepOutcome};
use longtail::rng::StreamKey;
use longtail::solver::{min_norm_solve, DEFAULT_SV_REL_TOL};

const GRID_ALPHAS: [f64; 4] = [1.0, 1.5, 2.0, 2.5];
const GRID_SIGMAS: [f64; 3] = [0.0, 0.05, 0.1];

struct SweepData {
    config: RunConfig,
    outcome: SweepOutcome,
    elapsed: Duration,
    dir: tempfile::TempDir,
    outputs: Vec<std::path::PathBuf>,
}

static SWEEP: OnceLock<SweepData> = OnceLock::new();

fn full_config(output_dir: &std::path::Path) -> RunConfig {
    RunConfig {
        d: 10_000,
        n: 1_000,
        s: 5.0,
        alpha: 1.5,
        sigma: 0.0,
        c_k: 10.0,
        beta_decay: 0.1,
        n_seeds: 50,
        ood: OodMode::Singletons { t: 2 },
        output_dir: output_dir.display().to_string(),
        ..RunConfig::default()
    }
}

fn shared_sweep() -> &'static SweepData {
    SWEEP.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let config = full_config(dir.path());
        let start = Instant::now();
        let outcome = sweep(&config);
        let elapsed = start.elapsed();
        assert!(outcome.failures.is_empty(), "sweep failures: {:?}", outcome.failures);
        let outputs = write_outputs(&config, &outcome, true).expect("sweep outputs");
        SweepData { config, outcome, elapsed, dir, outputs }
    })
}

fn cell(outcome: &SweepOutcome, alpha: f64, sigma: f64) -> &RunRecord {
    outcome
        .cells
        .iter()
        .find(|c| c.alpha == alpha && c.sigma == sigma)
        .unwrap_or_else(|| panic!("missing cell ({alpha}, {sigma})"))
}

fn mean_of(record: &RunRecord, metric: &str) -> f64 {
    record
        .aggregates
        .iter()
        .find(|a| a.metric == metric)
        .unwrap_or_else(|| panic!("missing aggregate {metric}"))
        .mean
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn criterion_1_solver_matches_oracle_on_small_instances() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for index in 0..200u64 {
        let (_, _, samples) = small_instance(index);
        let est = min_norm_solve(&samples, DEFAULT_SV_REL_TOL).unwrap();
        let oracle = gram_min_norm(&samples);
        let gap = linf_gap(&est.dense(), &oracle);
        assert!(gap <= 1e-8, "instance {index}: solver vs oracle linf gap {gap}");
        worst = worst.max(gap);
    }
    let elapsed = start.elapsed();
    let pass = elapsed < Duration::from_secs(10);
    println!(
        "criterion 1: {} - 200 instances within 1e-8 of the Gram oracle, worst gap {worst:.2e}, {:.2}s",
        verdict(pass),
        elapsed.as_secs_f64()
    );
    assert!(pass, "runtime {elapsed:?} exceeded the 10s budget");
}

#[test]
fn criterion_2_noiseless_interpolation_and_common_recovery() {
    let data = shared_sweep();
    let record = cell(&data.outcome, 1.5, 0.0);
    assert_eq!(record.rows.len(), 50);
    for row in &record.rows {
        assert!(
            row.residual_norm <= 1e-8 * row.y_norm,
            "seed {}: residual {} exceeds 1e-8 |y| = {}",
            row.seed,
            row.residual_norm,
            1e-8 * row.y_norm
        );
    }
    let full_rank: Vec<_> = record.rows.iter().filter(|r| r.s0_rank == r.k).collect();
    let mut worst_common = 0.0f64;
    for row in &full_rank {
        assert!(
            row.common_avg_sq_error <= 1e-12,
            "seed {}: full common rank but common sq error {}",
            row.seed,
            row.common_avg_sq_error
        );
        worst_common = worst_common.max(row.common_avg_sq_error);
    }
    let pass = full_rank.len() >= 45;
    println!(
        "criterion 2: {} - 50/50 seeds interpolate; common block full rank in {}/50 (need 45), \
         worst common sq error {worst_common:.2e}",
        verdict(pass),
        full_rank.len()
    );
    assert!(pass, "full common rank in only {}/50 seeds", full_rank.len());
}

#[test]
fn criterion_3_closed_form_agrees_with_monte_carlo() {
    let draws = 100_000;
    let mut worst_se_ratio = 0.0f64;
    for i in 0..20u64 {
        let alpha = GRID_ALPHAS[(i % 4) as usize];
        let sigma = GRID_SIGMAS[(i % 3) as usize];
        let seed = 101 + i;
        let dist = build_power_law(10_000, 5.0, alpha).unwrap();
        let truth = build_ground_truth(10_000, 0.1);
        let choice = choose_threshold(&dist, 1_000, 10.0).unwrap();
        let samples = sample_dataset(&dist, &truth, 1_000, sigma, seed);
        let est = min_norm_solve(&samples, DEFAULT_SV_REL_TOL).unwrap();
        let mut stream = StreamKey::from_seed(seed).label("oodselect").stream();
        let forced = select_singleton_features(&samples, choice.k, 2, &mut stream).unwrap();
        let key = StreamKey::from_seed(seed).label("mc");

        let closed_in = in_dist_loss_closed(&est, &truth, &dist);
        let mc_in = monte_carlo_loss(&est, &truth, &dist, None, draws, key.label("indist"));
        let gap = (closed_in - mc_in.mean).abs();
        assert!(
            gap <= 4.0 * mc_in.std_error,
            "alpha {alpha} sigma {sigma} seed {seed}: in-dist closed {closed_in} vs mc {} +- {}",
            mc_in.mean,
            mc_in.std_error
        );
        worst_se_ratio = worst_se_ratio.max(gap / mc_in.std_error);

        let closed_ood = ood_loss_closed(&est, &truth, &dist, &forced);
        let mc_ood = monte_carlo_loss(&est, &truth, &dist, Some(&forced), draws, key.label("ood"));
        let gap = (closed_ood - mc_ood.mean).abs();
        assert!(
            gap <= 4.0 * mc_ood.std_error,
            "alpha {alpha} sigma {sigma} seed {seed}: ood closed {closed_ood} vs mc {} +- {}",
            mc_ood.mean,
            mc_ood.std_error
        );
        worst_se_ratio = worst_se_ratio.max(gap / mc_ood.std_error);
    }
    println!(
        "criterion 3: PASS - 20 instances, both losses within 4 se at 1e5 draws, \
         worst |closed - mc| / se = {worst_se_ratio:.2}"
    );
}

#[test]
fn criterion_4_structural_windows() {
    let data = shared_sweep();

    // Feature census equals the support union on every row of the sweep.
    let mut census_rows = 0;
    for record in &data.outcome.cells {
        for row in &record.rows {
            assert_eq!(
                row.f_size, row.support_size,
                "alpha {} sigma {} seed {}: census {} vs support {}",
                record.alpha, record.sigma, row.seed, row.f_size, row.support_size
            );
            census_rows += 1;
        }
    }

    // Two-sided |S0| window around n(1 - p_tail) at alpha = 1.5. The tail
    // mass 0.62 is not small here: 1 - p_tail only lower-bounds the no-tail
    // row probability prod_{i>k}(1 - p_i), and the gap (about 157 rows)
    // exceeds the five-sigma half-width (about 98 rows), so the two-sided
    // form cannot hold. The one-sided count shows the bound it relaxes to.
    let record = cell(&data.outcome, 1.5, 0.0);
    let n = data.config.n as f64;
    let mut inside = 0;
    let mut above_lower = 0;
    let mut mean_s0 = 0.0;
    let mut center = 0.0;
    for row in &record.rows {
        center = n * (1.0 - row.p_tail);
        let half = 5.0 * center.sqrt();
        let s0 = row.s0_count as f64;
        if (s0 - center).abs() <= half {
            inside += 1;
        }
        if s0 >= center - half {
            above_lower += 1;
        }
        mean_s0 += s0 / record.rows.len() as f64;
    }
    let window_pass = inside >= 45;

    // The s_ge2 = 0 clause at alpha = 2.5 is conditional on np_tail^2 < 0.1,
    // which does not hold at this scale; it is reported, not asserted.
    let record25 = cell(&data.outcome, 2.5, 0.0);
    let p_tail25 = record25.rows[0].p_tail;
    let np2 = n * p_tail25 * p_tail25;
    let clean = record25.rows.iter().filter(|r| r.s_ge2_count == 0).count();
    let sge2_pass = if np2 < 0.1 { clean >= 48 } else { true };

    let pass = window_pass && sge2_pass;
    println!(
        "criterion 4: {} - census equals support on {census_rows}/600 rows; |S0| two-sided window \
         {inside}/50 (need 45; mean |S0| {mean_s0:.1} vs center {center:.1}, one-sided lower bound \
         holds {above_lower}/50); alpha 2.5 premise n p_tail^2 = {np2:.2} >= 0.1 so the s_ge2 clause \
         is vacuous (s_ge2 = 0 in {clean}/50 seeds)",
        verdict(pass)
    );
    assert!(
        pass,
        "|S0| inside the stated two-sided window in only {inside}/50 seeds: the window center \
         n(1 - p_tail) = {center:.1} sits {:.1} rows below the process mean {mean_s0:.1} because \
         1 - p_tail underestimates prod(1 - p_i) at tail mass {:.3}; the one-sided version holds \
         in {above_lower}/50 seeds",
        mean_s0 - center,
        record.rows[0].p_tail
    );
}

#[test]
fn criterion_5_noisy_singleton_recovery_and_ood_envelope() {
    let data = shared_sweep();
    let record = cell(&data.outcome, 2.5, 0.05);
    let ok: usize = record.rows.iter().map(|r| r.singleton_ok_count).sum();
    let total: usize = record.rows.iter().map(|r| r.singleton_tail_count).sum();
    let fraction = ok as f64 / total as f64;

    let mean_ood = mean_of(record, "ood_loss");
    let p_tail = record.rows[0].p_tail;
    let sigma = 0.05f64;
    let envelope = p_tail + 20.0 * sigma * sigma * 2.0 * (10_000f64).ln();

    let pass = fraction >= 0.95 && mean_ood <= envelope;
    println!(
        "criterion 5: {} - singleton recovery within 10 sigma sqrt(ln d) for {ok}/{total} \
         = {fraction:.4} pairs (need 0.95); mean ood loss {mean_ood:.4} <= envelope {envelope:.4}",
        verdict(pass)
    );
    assert!(pass, "fraction {fraction:.4}, mean ood {mean_ood:.4} vs envelope {envelope:.4}");
}

#[test]
fn criterion_6_qualitative_sweep_relations() {
    let data = shared_sweep();
    let mut notes: Vec<String> = Vec::new();

    // (a) Every loss at alpha = 1.0 strictly exceeds its alpha >= 1.5
    // counterpart at the same sigma.
    for &sigma in &GRID_SIGMAS {
        for metric in ["in_dist_loss", "ood_loss"] {
            let at_one = mean_of(cell(&data.outcome, 1.0, sigma), metric);
            for &alpha in &GRID_ALPHAS[1..] {
                let other = mean_of(cell(&data.outcome, alpha, sigma), metric);
                if at_one <= other {
                    notes.push(format!(
                        "{metric}(1.0, {sigma}) = {at_one:.5} <= {metric}({alpha}, {sigma}) = {other:.5}"
                    ));
                }
            }
        }
    }

    // (b) Tail error grows with the noise level: ratio sigma 0.1 over 0.05
    // within [1.5, 6] for every alpha >= 1.5. Per-feature error proportional
    // to sigma doubles across that step, so the squared-error ratio should
    // sit near 4; the window's floor of 1.5 tolerates some noise-independent
    // residual. At alpha = 1.5 the tail is dense enough (p_tail = 0.618) that
    // rows holding two or more tail features are common, and the entangled
    // errors they leave behind dominate both sigma levels, pinning the ratio
    // below the window. The failure is structural, not a tolerance miss: the
    // absolute-error ratio lands below 1.5 as well.
    let mut ratios: Vec<f64> = Vec::new();
    for &alpha in &GRID_ALPHAS[1..] {
        let hi = mean_of(cell(&data.outcome, alpha, 0.1), "tail_avg_sq_error");
        let lo = mean_of(cell(&data.outcome, alpha, 0.05), "tail_avg_sq_error");
        let ratio = hi / lo;
        ratios.push(ratio);
        if !(1.5..=6.0).contains(&ratio) {
            let base = mean_of(cell(&data.outcome, alpha, 0.0), "tail_avg_sq_error");
            let abs_hi = mean_of(cell(&data.outcome, alpha, 0.1), "tail_avg_abs_error");
            let abs_lo = mean_of(cell(&data.outcome, alpha, 0.05), "tail_avg_abs_error");
            notes.push(format!(
                "tail error ratio at alpha {alpha}: {ratio:.3} outside [1.5, 6] \
                 (sq means at sigma 0 / 0.05 / 0.1 = {base:.4} / {lo:.4} / {hi:.4}; \
                 noise-free floor holds the ratio down; abs-error ratio {:.3})",
                abs_hi / abs_lo
            ));
        }
    }

    // (c) The sigma = 0 and 0.05 in-dist curves nearly overlap: their gap
    // stays below the 0.05 to 0.1 gap at every alpha.
    for &alpha in &GRID_ALPHAS {
        let l0 = mean_of(cell(&data.outcome, alpha, 0.0), "in_dist_loss");
        let l05 = mean_of(cell(&data.outcome, alpha, 0.05), "in_dist_loss");
        let l10 = mean_of(cell(&data.outcome, alpha, 0.1), "in_dist_loss");
        if (l05 - l0).abs() >= (l10 - l05).abs() {
            notes.push(format!(
                "in-dist gaps at alpha {alpha}: |{l05:.5} - {l0:.5}| >= |{l10:.5} - {l05:.5}|"
            ));
        }
    }

    if data.elapsed >= Duration::from_secs(30 * 60) {
        notes.push(format!("sweep took {:.1} min", data.elapsed.as_secs_f64() / 60.0));
    }

    let pass = notes.is_empty();
    let ratio_text = ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ");
    println!(
        "criterion 6: {} - alpha 1.0 dominates both losses at every sigma; tail error ratios \
         [{ratio_text}]; near-overlap of sigma 0 and 0.05 in-dist curves; sweep {:.1} min{}",
        verdict(pass),
        data.elapsed.as_secs_f64() / 60.0,
        if notes.is_empty() { String::new() } else { format!("; violations: {}", notes.join("; ")) }
    );
    assert!(pass, "{notes:?}");
}

#[test]
fn criterion_7_sweep_determinism() {
    let data = shared_sweep();
    let dir = tempfile::tempdir().unwrap();
    let config = full_config(dir.path());
    let outcome = sweep(&config);
    let outputs = write_outputs(&config, &outcome, true).unwrap();
    assert_eq!(outputs.len(), data.outputs.len());

    // timings.csv holds wall-clock measurements and config_used.toml echoes
    // the output directory; both are exempt by design. Everything else must
    // match byte for byte.
    let mut compared = Vec::new();
    for path in &data.outputs {
        let rel = path.strip_prefix(data.dir.path()).unwrap();
        let name = rel.to_str().unwrap();
        if name == "timings.csv" || name == "config_used.toml" {
            continue;
        }
        let first = std::fs::read(path).unwrap();
        let second = std::fs::read(dir.path().join(rel)).unwrap();
        assert_eq!(first, second, "{name} differs between independent sweeps");
        compared.push(name.to_string());
    }
    assert!(compared.iter().any(|n| n == "results.csv"));
    assert!(compared.iter().any(|n| n == "aggregates.csv"));
    println!(
        "criterion 7: PASS - {} artifacts byte-identical across independent sweeps ({})",
        compared.len(),
        compared.join(", ")
    );
}
