//! Feature frequency model.
//!
//! Feature `i` (1-based) of a sample is nonzero with probability `p_i`,
//! where `p` is nonincreasing. The built-in family is the truncated power
//! law
//!
//! ```text
//! p_i = min{ 1, s * i^(-alpha) / Z_alpha },   Z_alpha = sum_{i<=d} i^(-alpha)
//! ```
//!
//! so that `sum_i p_i <= s`: `s` controls the expected number of nonzero
//! features per sample and `alpha` controls how fast the tail decays.
//! `Z_alpha` is computed by direct left-to-right summation; no closed-form
//! shortcut is taken, so an independent reimplementation reproduces it
//! exactly.
//!
//! Two derived quantities drive everything downstream:
//!
//! * the head/tail split at a threshold `k`: `p_head = sum_{i<=k} p_i`,
//!   `p_tail = sum_{i>k} p_i` (partial sums use compensated summation);
//! * the threshold itself, chosen as the smallest `k` whose per-sample
//!   expected appearance count `n * p_k` falls below a cutoff `c_k`.
//!
//! For `alpha = 1 + c` with `c > 0` and `p_k < 1`, the tail mass behaves
//! like `p_tail = Theta(s * k^(1-alpha))` and `p_k = Theta(s * k^(-alpha))`;
//! a test pins the empirical constants of both ratios.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("dimension must be at least 1")]
    EmptyDimension,
    #[error("parameter {name} must be finite and positive, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("probability at index {index} is {value}, outside (0, 1]")]
    BadProbability { index: usize, value: f64 },
    #[error("probabilities must be nonincreasing, but p[{index}] exceeds its predecessor")]
    NotNonincreasing { index: usize },
    #[error("threshold k = {k} outside 1..={d}")]
    ThresholdOutOfRange { k: usize, d: usize },
}

/// How a distribution was constructed; power-law parameters feed the
/// closed-form bound expressions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Provenance {
    Explicit,
    PowerLaw { s: f64, alpha: f64, z_alpha: f64 },
}

/// Per-feature appearance probabilities, nonincreasing, each in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDistribution {
    d: usize,
    p: Vec<f64>,
    provenance: Provenance,
}

impl FeatureDistribution {
    /// Validate an explicit probability vector.
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self, DistributionError> {
        if p.is_empty() {
            return Err(DistributionError::EmptyDimension);
        }
        for (pos, &v) in p.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 || v > 1.0 {
                return Err(DistributionError::BadProbability { index: pos + 1, value: v });
            }
            if pos > 0 && v > p[pos - 1] {
                return Err(DistributionError::NotNonincreasing { index: pos + 1 });
            }
        }
        Ok(FeatureDistribution { d: p.len(), p, provenance: Provenance::Explicit })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Probability that feature `i` (1-based) is nonzero.
    #[inline]
    pub fn prob(&self, i: usize) -> f64 {
        self.p[i - 1]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `(s, alpha)` when power-law built, `None` for explicit vectors.
    pub fn power_law_params(&self) -> Option<(f64, f64)> {
        match self.provenance {
            Provenance::PowerLaw { s, alpha, .. } => Some((s, alpha)),
            Provenance::Explicit => None,
        }
    }
}

/// Truncated power law over `d` features. `Z_alpha` is summed directly,
/// left to right.
pub fn build_power_law(d: usize, s: f64, alpha: f64) -> Result<FeatureDistribution, DistributionError> {
    if d == 0 {
        return Err(DistributionError::EmptyDimension);
    }
    if !s.is_finite() || s <= 0.0 {
        return Err(DistributionError::BadParameter { name: "s", value: s });
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(DistributionError::BadParameter { name: "alpha", value: alpha });
    }
    let mut z = 0.0;
    for i in 1..=d {
        z += (i as f64).powf(-alpha);
    }
    let mut p = Vec::with_capacity(d);
    for i in 1..=d {
        let v = (s * (i as f64).powf(-alpha) / z).min(1.0);
        if v <= 0.0 {
            // Underflow at extreme (alpha, d); every probability must stay positive.
            return Err(DistributionError::BadProbability { index: i, value: v });
        }
        p.push(v);
    }
    Ok(FeatureDistribution { d, p, provenance: Provenance::PowerLaw { s, alpha, z_alpha: z } })
}

/// Compensated (Kahan) accumulator for probability partial sums.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum
    }
}

fn kahan_total(xs: &[f64]) -> f64 {
    let mut acc = KahanSum::default();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Head and tail probability mass around a threshold `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailSplit {
    pub k: usize,
    pub p_head: f64,
    pub p_tail: f64,
}

/// Exact split of the total mass at `k`: head is indices `1..=k`, tail is
/// `k+1..=d`. Sums run in index order with compensation.
pub fn tail_split(dist: &FeatureDistribution, k: usize) -> Result<TailSplit, DistributionError> {
    if k == 0 || k > dist.d {
        return Err(DistributionError::ThresholdOutOfRange { k, d: dist.d });
    }
    let p_head = kahan_total(&dist.p[..k]);
    let p_tail = kahan_total(&dist.p[k..]);
    Ok(TailSplit { k, p_head, p_tail })
}

/// Result of the threshold rule. `saturated` means even the rarest feature
/// appears more than `c_k` times in expectation, so the split is degenerate
/// (`k = d`, empty tail).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdChoice {
    pub k: usize,
    pub saturated: bool,
}

/// Smallest `k` with `n * p_k <= c_k`.
pub fn choose_threshold(
    dist: &FeatureDistribution,
    n: usize,
    c_k: f64,
) -> Result<ThresholdChoice, DistributionError> {
    if n == 0 {
        return Err(DistributionError::BadParameter { name: "n", value: 0.0 });
    }
    if !c_k.is_finite() || c_k <= 0.0 {
        return Err(DistributionError::BadParameter { name: "c_k", value: c_k });
    }
    let nf = n as f64;
    for (pos, &p) in dist.p.iter().enumerate() {
        if nf * p <= c_k {
            return Ok(ThresholdChoice { k: pos + 1, saturated: false });
        }
    }
    Ok(ThresholdChoice { k: dist.d, saturated: true })
}
