//! Gradient-descent solver for the fair regression objective, used to
//! cross-check the closed form.

use nalgebra::DVector;

use super::objective;
use crate::corpus::FusionDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    /// Fixed step size; `None` picks `1 / L` from a power-iteration estimate
    /// of the Hessian's largest eigenvalue `L`.
    pub step: Option<f64>,
    pub max_iters: usize,
    /// Stop once the gradient sup-norm falls below this.
    pub tol: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            step: None,
            max_iters: 1_000_000,
            tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub weights: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub step: f64,
    pub gradient_norm: f64,
}

/// Largest Hessian eigenvalue by power iteration. The Hessian is positive
/// semi-definite, so the Rayleigh quotient converges from below; the result is
/// inflated slightly to stay an upper bound in practice.
pub fn largest_curvature(ds: &FusionDataset, beta: f64, lambda: f64) -> f64 {
    let k = ds.k();
    let mut v = DVector::from_fn(k, |i, _| 1.0 + 0.1 * i as f64);
    v.normalize_mut();
    let mut estimate = 0.0;
    for _ in 0..500 {
        let hv = objective::hessian_times(ds, &v, beta, lambda);
        let next = v.dot(&hv);
        let norm = hv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = hv / norm;
        if (next - estimate).abs() <= 1e-12 * next.abs() {
            estimate = next;
            break;
        }
        estimate = next;
    }
    estimate * 1.01
}

/// Plain gradient descent from `w = 0`.
pub fn gradient_descent(ds: &FusionDataset, beta: f64, lambda: f64, opts: DescentOptions) -> DescentResult {
    let step = opts.step.unwrap_or_else(|| {
        let l = largest_curvature(ds, beta, lambda);
        if l > 0.0 {
            1.0 / l
        } else {
            1.0
        }
    });
    let mut w = DVector::zeros(ds.k());
    let mut g = objective::gradient(ds, &w, beta, lambda);
    let initial = g.amax().max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let norm = g.amax();
        if norm < opts.tol {
            return DescentResult {
                weights: w,
                converged: true,
                iterations,
                step,
                gradient_norm: norm,
            };
        }
        if !norm.is_finite() || norm > 1e12 * initial {
            break;
        }
        w -= &g * step;
        g = objective::gradient(ds, &w, beta, lambda);
        iterations += 1;
    }
    let gradient_norm = g.amax();
    DescentResult {
        converged: gradient_norm < opts.tol,
        weights: w,
        iterations,
        step,
        gradient_norm,
    }
}
