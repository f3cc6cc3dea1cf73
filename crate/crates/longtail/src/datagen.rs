//! Sample generation for the sparse sign-feature data model.
//!
//! A sample is a vector `x` in `{0, +1, -1}^d` with independent coordinates:
//! feature `i` is zero with probability `1 - p_i` and takes each sign with
//! probability `p_i / 2`. Its label is `y = <beta*, x> + sigma * g` with `g`
//! standard normal.
//!
//! Draw discipline (the reproducibility contract): row `j` consumes exactly
//! `d` uniforms from the substream `(seed, "row", j, "feat")`, one per
//! feature in increasing index order. A uniform `u` encodes both presence
//! and sign: `+1` if `u < p_i/2`, `-1` if `p_i/2 <= u < p_i`, absent
//! otherwise. The label noise comes from one normal draw on
//! `(seed, "row", j, "noise")`. The noise draw does not depend on `sigma`,
//! so datasets generated at different noise levels from one seed share the
//! same design matrix and the same underlying noise vector, scaled.
//!
//! Out-of-distribution points force a chosen feature set to be present
//! (sign uniform) while all other features follow the base law.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distribution::FeatureDistribution;
use crate::rng::{Stream, StreamKey};

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("requested {requested} singleton features but only {available} are available")]
    InsufficientSingletons { requested: usize, available: usize },
    #[error("forced feature index {index} outside 1..={d}")]
    ForcedIndexOutOfRange { index: u32, d: usize },
    #[error("forced feature index {index} appears more than once")]
    DuplicateForcedIndex { index: u32 },
}

/// Target coefficients `beta*_i = i^(-decay)`; `decay = 0` gives all ones.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    beta: Vec<f64>,
    max_abs: f64,
}

impl GroundTruth {
    /// Coefficient of feature `i` (1-based).
    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.beta[i - 1]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn d(&self) -> usize {
        self.beta.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }
}

pub fn build_ground_truth(d: usize, decay: f64) -> GroundTruth {
    assert!(d >= 1, "dimension must be at least 1");
    assert!(decay.is_finite(), "decay must be finite");
    let beta: Vec<f64> = (1..=d).map(|i| (i as f64).powf(-decay)).collect();
    let max_abs = beta.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    assert!(max_abs.is_finite() && max_abs > 0.0);
    GroundTruth { beta, max_abs }
}

/// One sample's nonzero coordinates as `(feature_index, sign)` pairs with
/// strictly increasing 1-based indices and signs in `{+1, -1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseRow {
    entries: Vec<(u32, i8)>,
}

impl SparseRow {
    pub fn from_entries(entries: Vec<(u32, i8)>) -> Self {
        for w in entries.windows(2) {
            assert!(w[0].0 < w[1].0, "entries must have strictly increasing indices");
        }
        for &(i, s) in &entries {
            assert!(i >= 1, "feature indices are 1-based");
            assert!(s == 1 || s == -1, "signs must be +1 or -1");
        }
        SparseRow { entries }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, i8)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `<x, beta>` against a dense coefficient slice of length `d`.
    pub fn dot(&self, beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(i, s) in &self.entries {
            acc += f64::from(s) * beta[i as usize - 1];
        }
        acc
    }

    /// Number of entries with index strictly greater than `k`.
    pub fn tail_count(&self, k: usize) -> usize {
        let cut = self.entries.partition_point(|&(i, _)| (i as usize) <= k);
        self.entries.len() - cut
    }
}

/// A generated dataset: design rows plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub n: usize,
    pub d: usize,
    pub rows: Vec<SparseRow>,
    pub y: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

/// Design and noise shared by every noise level of one seed: rows, clean
/// labels `<beta*, x_j>`, and unit-variance noise `g_j`.
#[derive(Clone, Debug)]
pub(crate) struct SampleDraw {
    pub d: usize,
    pub seed: u64,
    pub rows: Vec<SparseRow>,
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
}

impl SampleDraw {
    /// Materialize labels at a noise level: `y_j = clean_j + sigma * g_j`.
    /// At `sigma = 0` this reproduces the clean labels bit for bit.
    pub fn with_sigma(&self, sigma: f64) -> SampleSet {
        assert!(sigma.is_finite() && sigma >= 0.0, "sigma must be finite and nonnegative");
        let y: Vec<f64> =
            self.clean.iter().zip(&self.noise).map(|(&c, &g)| c + sigma * g).collect();
        SampleSet {
            n: self.rows.len(),
            d: self.d,
            rows: self.rows.clone(),
            y,
            sigma,
            seed: self.seed,
        }
    }
}

fn sample_row(dist: &FeatureDistribution, stream: &mut Stream) -> SparseRow {
    let mut entries = Vec::new();
    for i in 1..=dist.d() {
        let u = stream.next_f64();
        let p = dist.prob(i);
        if u < 0.5 * p {
            entries.push((i as u32, 1i8));
        } else if u < p {
            entries.push((i as u32, -1i8));
        }
    }
    SparseRow { entries }
}

pub(crate) fn sample_design(
    dist: &FeatureDistribution,
    truth: &GroundTruth,
    n: usize,
    seed: u64,
) -> SampleDraw {
    assert!(n >= 1, "need at least one sample");
    assert_eq!(truth.d(), dist.d(), "ground truth and distribution dimensions differ");
    let root = StreamKey::from_seed(seed).label("row");
    // Parallel over rows; each row owns its substreams, so the result is
    // identical for any thread count.
    let per_row: Vec<(SparseRow, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let key = root.index(j as u64);
            let mut feat = key.label("feat").stream();
            let mut noise = key.label("noise").stream();
            let row = sample_row(dist, &mut feat);
            let clean = row.dot(truth.coefficients());
            let g = noise.next_normal();
            (row, clean, g)
        })
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for (row, c, g) in per_row {
        rows.push(row);
        clean.push(c);
        noise.push(g);
    }
    SampleDraw { d: dist.d(), seed, rows, clean, noise }
}

/// Draw `n` samples with labels at noise level `sigma`.
pub fn sample_dataset(
    dist: &FeatureDistribution,
    truth: &GroundTruth,
    n: usize,
    sigma: f64,
    seed: u64,
) -> SampleSet {
    sample_design(dist, truth, n, seed).with_sigma(sigma)
}

/// The noise vector `sigma * g_j` a dataset was generated with, regenerated
/// from the stream rather than recovered by subtraction.
pub fn noise_vector(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let root = StreamKey::from_seed(seed).label("row");
    (0..n)
        .map(|j| {
            let mut noise = root.index(j as u64).label("noise").stream();
            sigma * noise.next_normal()
        })
        .collect()
}

/// A set of feature indices forced to be present in out-of-distribution
/// draws. Stored sorted; construction validates range and uniqueness.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ForcedSet {
    indices: Vec<u32>,
}

impl ForcedSet {
    pub fn new(mut indices: Vec<u32>, d: usize) -> Result<Self, DatagenError> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(DatagenError::DuplicateForcedIndex { index: w[0] });
            }
        }
        for &i in &indices {
            if i < 1 || i as usize > d {
                return Err(DatagenError::ForcedIndexOutOfRange { index: i, d });
            }
        }
        Ok(ForcedSet { indices })
    }

    pub fn empty() -> Self {
        ForcedSet { indices: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn contains(&self, i: u32) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Draw one out-of-distribution point: forced features are always present
/// with a uniform sign, everything else follows the base law. Consumes one
/// uniform per feature in increasing index order, like row generation.
pub fn sample_ood_point(
    dist: &FeatureDistribution,
    forced: &ForcedSet,
    stream: &mut Stream,
) -> SparseRow {
    if let Some(&max) = forced.indices.last() {
        assert!(max as usize <= dist.d(), "forced index outside dimension");
    }
    let mut entries = Vec::new();
    let mut next_forced = 0usize;
    for i in 1..=dist.d() {
        let u = stream.next_f64();
        let is_forced =
            next_forced < forced.indices.len() && forced.indices[next_forced] as usize == i;
        if is_forced {
            next_forced += 1;
            entries.push((i as u32, if u < 0.5 { 1i8 } else { -1i8 }));
        } else {
            let p = dist.prob(i);
            if u < 0.5 * p {
                entries.push((i as u32, 1i8));
            } else if u < p {
                entries.push((i as u32, -1i8));
            }
        }
    }
    SparseRow { entries }
}

/// How many times each observed feature appears across all rows.
pub(crate) fn appearance_census(rows: &[SparseRow]) -> BTreeMap<u32, u32> {
    let mut census = BTreeMap::new();
    for row in rows {
        for (i, _) in row.iter() {
            *census.entry(i).or_insert(0u32) += 1;
        }
    }
    census
}

/// Choose `t` distinct tail features (index > `k`) that appear exactly once
/// in the dataset, uniformly at random from the eligible set.
pub fn select_singleton_features(
    samples: &SampleSet,
    k: usize,
    t: usize,
    stream: &mut Stream,
) -> Result<ForcedSet, DatagenError> {
    let census = appearance_census(&samples.rows);
    let mut eligible: Vec<u32> =
        census.iter().filter(|&(&i, &c)| i as usize > k && c == 1).map(|(&i, _)| i).collect();
    if eligible.len() < t {
        return Err(DatagenError::InsufficientSingletons {
            requested: t,
            available: eligible.len(),
        });
    }
    // Partial Fisher-Yates over the (sorted) eligible list.
    for j in 0..t {
        let r = j + stream.next_below((eligible.len() - j) as u64) as usize;
        eligible.swap(j, r);
    }
    eligible.truncate(t);
    ForcedSet::new(eligible, samples.d)
}
