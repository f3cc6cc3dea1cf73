//! Shared helpers for integration tests: an independent minimum-norm
//! oracle and deterministic small-instance builders.

use longtail::datagen::{build_ground_truth, sample_dataset, GroundTruth, SampleSet};
use longtail::distribution::{build_power_law, FeatureDistribution};
use longtail::rng::StreamKey;
use nalgebra::{DMatrix, DVector};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: returns the
/// diagonal and the accumulated rotations as columns. Hand-rolled so the
/// oracle shares no decomposition code with the production solver; Jacobi
/// also delivers high relative accuracy on the small eigenvalues that
/// decide rank.
fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut q = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for r in p + 1..n {
                off = off.max(a[(p, r)].abs());
            }
        }
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(f64::MIN_POSITIVE, f64::max);
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = a[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                // A <- G^T A G with G rotating the (p, r) plane: columns
                // first, then rows with the same coefficients.
                for idx in 0..n {
                    let aip = a[(idx, p)];
                    let air = a[(idx, r)];
                    a[(idx, p)] = c * aip - s * air;
                    a[(idx, r)] = s * aip + c * air;
                }
                for idx in 0..n {
                    let api = a[(p, idx)];
                    let ari = a[(r, idx)];
                    a[(p, idx)] = c * api - s * ari;
                    a[(r, idx)] = s * api + c * ari;
                }
                for idx in 0..n {
                    let qip = q[(idx, p)];
                    let qir = q[(idx, r)];
                    q[(idx, p)] = c * qip - s * qir;
                    q[(idx, r)] = s * qip + c * qir;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), q)
}

/// Minimum-norm least squares through the Gram route,
/// `beta = X^T (X X^T)^dagger y`, on the dense full-dimension design. This
/// is an independent cross-check for the production solver, which factors
/// the support-restricted matrix with an SVD instead.
///
/// Eigenvalues of `X X^T` are squared singular values of `X`, so the rank
/// cutoff lives in lambda space: Jacobi's noise floor on a zero eigenvalue
/// sits near `eps * lambda_max ~ 1e-16`, while genuine small singular
/// values of sign designs stay above `1e-4 * sigma_max`, i.e.
/// `1e-8 * lambda_max`. A relative cutoff of 1e-9 separates the regimes.
pub fn gram_min_norm(samples: &SampleSet) -> Vec<f64> {
    let n = samples.n;
    let d = samples.d;
    let mut x = DMatrix::<f64>::zeros(n, d);
    for (j, row) in samples.rows.iter().enumerate() {
        for (i, s) in row.iter() {
            x[(j, i as usize - 1)] = f64::from(s);
        }
    }
    let gram = &x * x.transpose();
    let (eigenvalues, q) = jacobi_eigen(gram);
    let lambda_max = eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l));
    let cutoff = lambda_max * 1e-9;
    let y = DVector::from_column_slice(&samples.y);
    let qty = q.tr_mul(&y);
    let mut w = DVector::zeros(n);
    for r in 0..n {
        if eigenvalues[r] > cutoff {
            w[r] = qty[r] / eigenvalues[r];
        }
    }
    let z = &q * w;
    x.tr_mul(&z).as_slice().to_vec()
}

/// A deterministic small instance with parameters fanned out from `index`.
/// Dimensions stay within n <= 30, d <= 100; sigma alternates {0, 0.1}.
pub fn small_instance(index: u64) -> (FeatureDistribution, GroundTruth, SampleSet) {
    let mut knobs = StreamKey::from_seed(0xA5C3).label("instance").index(index).stream();
    let d = 20 + (knobs.next_u64() % 81) as usize;
    let n = 5 + (knobs.next_u64() % 26) as usize;
    let s = 1.0 + 4.0 * knobs.next_f64();
    let alpha = 0.8 + 1.9 * knobs.next_f64();
    let decay = 0.5 * knobs.next_f64();
    let sigma = if index.is_multiple_of(2) { 0.0 } else { 0.1 };
    let dist = build_power_law(d, s, alpha).expect("small instance parameters are valid");
    let truth = build_ground_truth(d, decay);
    let samples = sample_dataset(&dist, &truth, n, sigma, 1000 + index);
    (dist, truth, samples)
}

/// Largest absolute gap between an estimate's dense coefficients and a
/// reference vector.
pub fn linf_gap(dense: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(dense.len(), reference.len());
    dense
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
