//! Gender-bias auditing and fairness-aware fusion of black-box sentiment scorers.
//!
//! The pipeline runs in five stages:
//!
//! - [`corpus`]: two-actor templates, gender swapping, annotation aggregation,
//!   pair averaging and the train/test split.
//! - [`blackbox`]: score sources (recorded CSV replay or a seeded synthetic scorer).
//! - [`metrics`]: RMSE accuracy error, per-pair bias MAE, mean difference,
//!   paired t-test and Pareto dominance.
//! - [`fusion`]: the four fusion baselines and the flexible fair regression
//!   `MSE(w) + beta * P(w) + lambda * |w|^2`, solved in closed form and
//!   cross-checked by gradient descent.
//! - [`frontier`]: beta sweeps, utopia-point selection and accuracy-budget queries.
//!
//! [`cli`] wires these together behind the `fairfuse` binary.

pub mod blackbox;
pub mod cli;
pub mod corpus;
pub mod demo;
pub mod error;
pub mod experiment;
pub mod frontier;
pub mod fusion;
pub mod metrics;

pub use error::{Error, Result};
