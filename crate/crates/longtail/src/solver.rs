//! Minimum-norm least-squares estimation on the observed feature support.
//!
//! The estimator is `beta = pinv(X' X) X' y`, the minimum-l2-norm solution
//! of the least-squares problem. Features never observed in the data get an
//! exactly zero coefficient, so the problem is solved on the restricted
//! `n x |F|` matrix, where `F` is the union of row supports. The
//! pseudoinverse is taken through a dense SVD with a relative rank cutoff:
//! singular values `<= sv_rel_tol * sigma_max * max(n, |F|)` are treated as
//! zero.
//!
//! `SupportFactor` separates the factorization from the triangular solve so
//! that datasets sharing a design matrix (same seed, different noise level)
//! pay for one SVD.

use faer::{Mat, Par};
use thiserror::Error;

use crate::datagen::SampleSet;

/// Factorizations run sequentially regardless of the process thread pool:
/// results must be bitwise identical across thread counts, and the harness
/// already parallelizes across seeds.
fn pin_sequential() {
    faer::set_global_parallelism(Par::Seq);
}

/// Default relative singular-value cutoff.
pub const DEFAULT_SV_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("no feature appears in any sample")]
    EmptySupport,
    #[error("non-finite value encountered in {stage}")]
    NonFinite { stage: &'static str },
    #[error("singular value decomposition did not converge")]
    SvdFailed,
    #[error("estimate dimension {estimate_d} does not match sample dimension {samples_d}")]
    DimensionMismatch { estimate_d: usize, samples_d: usize },
}

/// The observed feature set `F` with its column numbering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportMap {
    d: usize,
    observed: Vec<u32>,
}

impl SupportMap {
    pub(crate) fn from_parts(d: usize, observed: Vec<u32>) -> Self {
        for w in observed.windows(2) {
            assert!(w[0] < w[1], "support must be strictly increasing");
        }
        SupportMap { d, observed }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Observed feature indices, strictly increasing, 1-based.
    pub fn features(&self) -> &[u32] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Column position of a feature in the restricted matrix.
    pub fn column_of(&self, feature: u32) -> Option<usize> {
        self.observed.binary_search(&feature).ok()
    }

    pub fn contains(&self, feature: u32) -> bool {
        self.column_of(feature).is_some()
    }
}

/// Union of row supports. Errors when every row is empty.
pub fn restrict_support(samples: &SampleSet) -> Result<SupportMap, SolverError> {
    let mut seen = vec![false; samples.d];
    for row in &samples.rows {
        for (i, _) in row.iter() {
            seen[i as usize - 1] = true;
        }
    }
    let observed: Vec<u32> =
        seen.iter().enumerate().filter(|&(_, &s)| s).map(|(i, _)| i as u32 + 1).collect();
    if observed.is_empty() {
        return Err(SolverError::EmptySupport);
    }
    Ok(SupportMap { d: samples.d, observed })
}

/// A fitted minimum-norm estimate, stored sparsely over the support.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    support: SupportMap,
    values: Vec<f64>,
    rank: usize,
    sv_tolerance: f64,
    residual_norm: f64,
}

impl Estimate {
    pub(crate) fn from_parts(
        support: SupportMap,
        values: Vec<f64>,
        rank: usize,
        sv_tolerance: f64,
        residual_norm: f64,
    ) -> Self {
        assert_eq!(support.len(), values.len());
        Estimate { support, values, rank, sv_tolerance, residual_norm }
    }

    pub fn support(&self) -> &SupportMap {
        &self.support
    }

    /// Coefficients over the support, aligned with `support().features()`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn d(&self) -> usize {
        self.support.d
    }

    /// Effective rank used by the pseudoinverse.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Absolute singular-value cutoff that was applied.
    pub fn sv_tolerance(&self) -> f64 {
        self.sv_tolerance
    }

    /// `||X beta - y||_2` on the training data.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    /// Coefficient of a feature; zero outside the support.
    pub fn coefficient(&self, feature: u32) -> f64 {
        match self.support.column_of(feature) {
            Some(c) => self.values[c],
            None => 0.0,
        }
    }

    /// `(feature, value)` pairs in increasing feature order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.support.observed.iter().copied().zip(self.values.iter().copied())
    }

    /// Dense length-`d` coefficient vector.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.support.d];
        for (i, v) in self.iter() {
            out[i as usize - 1] = v;
        }
        out
    }

    /// `||beta||_2`; zeros outside the support contribute nothing.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// SVD of the support-restricted design matrix, reusable across label
/// vectors that share the design.
pub struct SupportFactor {
    support: SupportMap,
    u: Mat<f64>,
    v: Mat<f64>,
    singular: Vec<f64>,
    sv_tolerance: f64,
    rank: usize,
    n: usize,
}

impl SupportFactor {
    pub fn new(samples: &SampleSet, sv_rel_tol: f64) -> Result<Self, SolverError> {
        assert!(
            sv_rel_tol.is_finite() && sv_rel_tol > 0.0 && sv_rel_tol < 1.0,
            "sv_rel_tol must lie in (0, 1)"
        );
        pin_sequential();
        let support = restrict_support(samples)?;
        let n = samples.n;
        let m = support.len();
        let mut mat = Mat::<f64>::zeros(n, m);
        for (j, row) in samples.rows.iter().enumerate() {
            for (i, s) in row.iter() {
                let c = support.column_of(i).expect("support covers every row entry");
                mat[(j, c)] = f64::from(s);
            }
        }
        let svd = mat.thin_svd().map_err(|_| SolverError::SvdFailed)?;
        let u = svd.U().to_owned();
        let v = svd.V().to_owned();
        let singular: Vec<f64> = svd.S().column_vector().iter().copied().collect();
        if singular.iter().any(|s| !s.is_finite()) {
            return Err(SolverError::NonFinite { stage: "singular values" });
        }
        let sigma_max = singular.iter().fold(0.0f64, |a, &b| a.max(b));
        let sv_tolerance = sv_rel_tol * sigma_max * n.max(m) as f64;
        let rank = singular.iter().filter(|&&s| s > sv_tolerance).count();
        Ok(SupportFactor { support, u, v, singular, sv_tolerance, rank, n })
    }

    pub fn support(&self) -> &SupportMap {
        &self.support
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sv_tolerance(&self) -> f64 {
        self.sv_tolerance
    }

    /// Solve for one label vector. The samples must carry the same design
    /// the factor was built from.
    pub fn solve(&self, samples: &SampleSet) -> Result<Estimate, SolverError> {
        assert_eq!(samples.n, self.n, "sample count differs from factored design");
        assert_eq!(samples.d, self.support.d, "dimension differs from factored design");
        if samples.y.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { stage: "labels" });
        }
        let m = self.support.len();
        let mut w = vec![0.0; self.singular.len()];
        for (r, coef) in w.iter_mut().enumerate() {
            let s = self.singular[r];
            if s > self.sv_tolerance {
                let mut dot = 0.0;
                for (j, &yj) in samples.y.iter().enumerate() {
                    dot += self.u[(j, r)] * yj;
                }
                *coef = dot / s;
            }
        }
        let mut values = vec![0.0; m];
        for (r, &coef) in w.iter().enumerate() {
            if coef != 0.0 {
                for (c, value) in values.iter_mut().enumerate() {
                    *value += self.v[(c, r)] * coef;
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { stage: "solution" });
        }
        let mut resid_sq = 0.0;
        for (j, row) in samples.rows.iter().enumerate() {
            let mut pred = 0.0;
            for (i, s) in row.iter() {
                let c = self.support.column_of(i).expect("support covers every row entry");
                pred += f64::from(s) * values[c];
            }
            let r = pred - samples.y[j];
            resid_sq += r * r;
        }
        Ok(Estimate {
            support: self.support.clone(),
            values,
            rank: self.rank,
            sv_tolerance: self.sv_tolerance,
            residual_norm: resid_sq.sqrt(),
        })
    }
}

/// Factor and solve in one call.
pub fn min_norm_solve(samples: &SampleSet, sv_rel_tol: f64) -> Result<Estimate, SolverError> {
    SupportFactor::new(samples, sv_rel_tol)?.solve(samples)
}

/// Training residuals `r_j = <beta, x_j> - y_j`.
pub fn residuals(samples: &SampleSet, est: &Estimate) -> Result<Vec<f64>, SolverError> {
    if est.d() != samples.d {
        return Err(SolverError::DimensionMismatch {
            estimate_d: est.d(),
            samples_d: samples.d,
        });
    }
    Ok(samples
        .rows
        .iter()
        .zip(&samples.y)
        .map(|(row, &y)| {
            let pred: f64 =
                row.iter().map(|(i, s)| f64::from(s) * est.coefficient(i)).sum();
            pred - y
        })
        .collect())
}

/// Numerical rank of a dense matrix under the solver's cutoff policy.
pub(crate) fn rank_with_policy(mat: &Mat<f64>, sv_rel_tol: f64) -> usize {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return 0;
    }
    pin_sequential();
    let singular = mat.singular_values().expect("singular values of a finite matrix");
    let sigma_max = singular.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = sv_rel_tol * sigma_max * mat.nrows().max(mat.ncols()) as f64;
    singular.iter().filter(|&&s| s > cutoff).count()
}
