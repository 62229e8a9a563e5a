//! The flexible fair regression objective
//!
//! ```text
//! L(w) = (1/T) |X w - y|^2 + (beta/T) |Delta w|^2 + lambda |w|^2
//! ```
//!
//! evaluated directly from the data rows. These are the reference
//! definitions; the closed-form solver assembles its normal matrix separately.

use nalgebra::DVector;

use crate::corpus::FusionDataset;

pub fn mse(ds: &FusionDataset, w: &DVector<f64>) -> f64 {
    (&ds.x * w - &ds.y).norm_squared() / ds.len() as f64
}

/// `P(w) = (1/T) sum_i (w . delta_i)^2`.
pub fn fairness_penalty(ds: &FusionDataset, w: &DVector<f64>) -> f64 {
    (&ds.delta * w).norm_squared() / ds.len() as f64
}

pub fn objective(ds: &FusionDataset, w: &DVector<f64>, beta: f64, lambda: f64) -> f64 {
    mse(ds, w) + beta * fairness_penalty(ds, w) + lambda * w.norm_squared()
}

pub fn gradient(ds: &FusionDataset, w: &DVector<f64>, beta: f64, lambda: f64) -> DVector<f64> {
    let t = ds.len() as f64;
    let residual = &ds.x * w - &ds.y;
    let gap = &ds.delta * w;
    (ds.x.tr_mul(&residual) + ds.delta.tr_mul(&gap) * beta) * (2.0 / t) + w * (2.0 * lambda)
}

/// Hessian-vector product `H v`; the objective is quadratic so `H` is constant.
pub fn hessian_times(ds: &FusionDataset, v: &DVector<f64>, beta: f64, lambda: f64) -> DVector<f64> {
    let t = ds.len() as f64;
    (ds.x.tr_mul(&(&ds.x * v)) + ds.delta.tr_mul(&(&ds.delta * v)) * beta) * (2.0 / t)
        + v * (2.0 * lambda)
}
