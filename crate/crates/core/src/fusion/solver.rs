//! Closed-form minimizer of the fair regression objective.

use nalgebra::{DMatrix, DVector};

use crate::corpus::FusionDataset;
use crate::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry are treated as
/// zero, i.e. the system is reported singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky
/// factorization. Returns `None` when a pivot is not clearly positive.
pub fn cholesky_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    if !(scale.is_finite()) || scale == 0.0 {
        return None;
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= PIVOT_TOLERANCE * scale {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    // forward: L z = b
    let mut z = b.clone();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[(i, k)] * z[k];
        }
        z[i] /= l[(i, i)];
    }
    // backward: L^T x = z
    let mut x = z;
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[(k, i)] * x[k];
        }
        x[i] /= l[(i, i)];
    }
    Some(x)
}

/// Minimizer of `MSE(w) + beta P(w) + lambda |w|^2` from the normal equations
/// `(X^T X + beta Delta^T Delta + lambda T I) w = X^T y`.
pub fn solve_fair_regression(ds: &FusionDataset, beta: f64, lambda: f64) -> Result<DVector<f64>> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if ds.is_empty() {
        return Err(Error::DatasetTooSmall("fitting needs at least one row".into()));
    }
    if ds.x.iter().chain(ds.y.iter()).chain(ds.delta.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    let t = ds.len() as f64;
    let k = ds.k();
    let mut normal = ds.x.tr_mul(&ds.x);
    if beta > 0.0 {
        normal += ds.delta.tr_mul(&ds.delta) * beta;
    }
    for i in 0..k {
        normal[(i, i)] += lambda * t;
    }
    let rhs = ds.x.tr_mul(&ds.y);
    let w = cholesky_solve(&normal, &rhs).ok_or(Error::SingularSystem { beta, lambda })?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("solution"));
    }
    Ok(w)
}
