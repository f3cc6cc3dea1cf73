//! Test losses in closed form, Monte Carlo validation, and per-group
//! recovery metrics.
//!
//! Coordinates are independent and zero-mean with `E[x_i^2] = p_i`, so the
//! in-distribution test loss of an estimate is exactly
//! `sum_i p_i (beta_i - beta*_i)^2`. Forcing a feature set raises its
//! second moment to 1:
//!
//! ```text
//! ood_loss = sum_{i not in forced} p_i delta_i^2 + sum_{i in forced} delta_i^2
//! ```
//!
//! Both sums run over all `d` coordinates with unfitted coordinates
//! contributing `delta_i = -beta*_i`. The Monte Carlo estimator exists to
//! cross-check the closed forms, never to replace them.

use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{sample_ood_point, ForcedSet, GroundTruth, SparseRow};
use crate::distribution::{FeatureDistribution, KahanSum};
use crate::rng::StreamKey;
use crate::solver::Estimate;

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Recovery quality split by feature group: common features are `i <= k`
/// (all of them), tail metrics cover observed features `i > k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub common_avg_sq_error: f64,
    pub common_avg_abs_error: f64,
    pub tail_avg_sq_error: f64,
    pub tail_avg_abs_error: f64,
    /// Fraction of observed features with `|delta_i| <= tol_rec`.
    pub recovered_fraction: f64,
    pub tail_observed_count: usize,
}

/// Loss under a forced feature set, with optional Monte Carlo cross-check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OodEval {
    pub forced: ForcedSet,
    pub loss: f64,
    pub mc: Option<McEstimate>,
}

/// Everything the evaluator can say about one fitted estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub in_dist_loss: f64,
    pub mc_in_dist: Option<McEstimate>,
    pub ood: Option<OodEval>,
    pub recovery: RecoveryReport,
}

/// Default recovery threshold: exact arithmetic up to roundoff when
/// noiseless, three noise standard deviations otherwise.
pub fn default_recovery_tolerance(sigma: f64) -> f64 {
    if sigma == 0.0 {
        1e-6
    } else {
        3.0 * sigma
    }
}

/// Shared kernel for both closed forms. Walks every coordinate in index
/// order so that the forced and unforced variants are bitwise comparable.
fn weighted_delta_sq(
    est: &Estimate,
    truth: &GroundTruth,
    dist: &FeatureDistribution,
    forced: Option<&ForcedSet>,
) -> f64 {
    let d = dist.d();
    assert_eq!(est.d(), d, "estimate dimension mismatch");
    assert_eq!(truth.d(), d, "ground truth dimension mismatch");
    let forced_idx: &[u32] = forced.map_or(&[], ForcedSet::indices);
    if let Some(&max) = forced_idx.last() {
        assert!(max as usize <= d, "forced index outside dimension");
    }

    let mut support = est.iter().peekable();
    let mut next_forced = 0usize;
    let mut acc = KahanSum::default();
    for i in 1..=d {
        let fitted = match support.peek() {
            Some(&(j, v)) if j as usize == i => {
                support.next();
                v
            }
            _ => 0.0,
        };
        let delta = fitted - truth.value(i);
        let weight = if next_forced < forced_idx.len() && forced_idx[next_forced] as usize == i {
            next_forced += 1;
            1.0
        } else {
            dist.prob(i)
        };
        acc.add(weight * delta * delta);
    }
    acc.value()
}

/// `E_{x ~ D}[(<beta - beta*, x>)^2] = sum_i p_i (beta_i - beta*_i)^2`.
pub fn in_dist_loss_closed(
    est: &Estimate,
    truth: &GroundTruth,
    dist: &FeatureDistribution,
) -> f64 {
    weighted_delta_sq(est, truth, dist, None)
}

/// Loss when the forced features always appear with a random sign. With an
/// empty forced set this equals `in_dist_loss_closed` exactly.
pub fn ood_loss_closed(
    est: &Estimate,
    truth: &GroundTruth,
    dist: &FeatureDistribution,
    forced: &ForcedSet,
) -> f64 {
    weighted_delta_sq(est, truth, dist, Some(forced))
}

/// Empirical mean and standard error of `(<beta - beta*, x>)^2` over fresh
/// draws. A draw consumes the substream `key.index(t)`, so results do not
/// depend on thread count.
pub fn monte_carlo_loss(
    est: &Estimate,
    truth: &GroundTruth,
    dist: &FeatureDistribution,
    forced: Option<&ForcedSet>,
    draws: usize,
    key: StreamKey,
) -> McEstimate {
    assert!(draws >= 2, "need at least two draws for a standard error");
    let empty = ForcedSet::empty();
    let forced = forced.unwrap_or(&empty);
    let mut delta = est.dense();
    for (i, slot) in delta.iter_mut().enumerate() {
        *slot -= truth.value(i + 1);
    }
    let values: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|t| {
            let mut stream = key.index(t).stream();
            let x: SparseRow = sample_ood_point(dist, forced, &mut stream);
            let e = x.dot(&delta);
            e * e
        })
        .collect();
    let mut sum = KahanSum::default();
    for &v in &values {
        sum.add(v);
    }
    let mean = sum.value() / draws as f64;
    let mut var_sum = KahanSum::default();
    for &v in &values {
        var_sum.add((v - mean) * (v - mean));
    }
    let var = var_sum.value() / (draws - 1) as f64;
    McEstimate { mean, std_error: (var.max(0.0) / draws as f64).sqrt(), draws }
}

/// Per-group recovery errors against the ground truth.
pub fn recovery_report(est: &Estimate, truth: &GroundTruth, k: usize, tol_rec: f64) -> RecoveryReport {
    let d = truth.d();
    assert_eq!(est.d(), d, "estimate dimension mismatch");
    assert!(k >= 1 && k <= d, "threshold outside 1..=d");
    assert!(tol_rec >= 0.0, "recovery tolerance must be nonnegative");

    let mut common_sq = KahanSum::default();
    let mut common_abs = KahanSum::default();
    for i in 1..=k {
        let delta = est.coefficient(i as u32) - truth.value(i);
        common_sq.add(delta * delta);
        common_abs.add(delta.abs());
    }

    let mut tail_sq = KahanSum::default();
    let mut tail_abs = KahanSum::default();
    let mut tail_count = 0usize;
    let mut recovered = 0usize;
    for (i, v) in est.iter() {
        let delta = v - truth.value(i as usize);
        if delta.abs() <= tol_rec {
            recovered += 1;
        }
        if i as usize > k {
            tail_sq.add(delta * delta);
            tail_abs.add(delta.abs());
            tail_count += 1;
        }
    }

    let observed = est.support().len();
    RecoveryReport {
        common_avg_sq_error: common_sq.value() / k as f64,
        common_avg_abs_error: common_abs.value() / k as f64,
        tail_avg_sq_error: if tail_count > 0 { tail_sq.value() / tail_count as f64 } else { 0.0 },
        tail_avg_abs_error: if tail_count > 0 { tail_abs.value() / tail_count as f64 } else { 0.0 },
        recovered_fraction: if observed > 0 { recovered as f64 / observed as f64 } else { 0.0 },
        tail_observed_count: tail_count,
    }
}
