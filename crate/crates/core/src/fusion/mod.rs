//! Fusion of per-modality scores into one prediction `w . x`.
//!
//! Baselines: unweighted average, inverse-RMSE weighted average, multiple
//! (ridge) regression, and a fairness-only weighting that counts how often
//! each modality treats the two genders alike. The fair regression adds
//! `beta * P(w)` to the ridge objective; see [`objective`].

pub mod objective;
pub mod oracle;
pub mod solver;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{FusionDataset, GenderedPair};
use crate::metrics::{self, AuditRow};
use crate::{Error, Result};

pub use oracle::{DescentOptions, DescentResult};

pub const DEFAULT_LAMBDA: f64 = 1e-6;
pub const DEFAULT_TAU: f64 = 0.1;

/// Slack on the `|gap| <= tau` test so that gaps equal to `tau` in decimal
/// notation are not lost to binary rounding.
const TAU_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unweighted,
    Weighted,
    Ols,
    FairnessOpt,
    Ffr,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Unweighted,
        Method::Weighted,
        Method::Ols,
        Method::FairnessOpt,
        Method::Ffr,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Method::Unweighted => "unweighted",
            Method::Weighted => "weighted",
            Method::Ols => "ols",
            Method::FairnessOpt => "fairness_opt",
            Method::Ffr => "ffr",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Unweighted => "Unweighted Average",
            Method::Weighted => "Weighted Average",
            Method::Ols => "Multiple Regression",
            Method::FairnessOpt => "Fairness Optimization",
            Method::Ffr => "Flexible Fair Regression",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// A fitted weight vector. Serializes to the model-file JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub method: Method,
    pub weights: Vec<f64>,
    pub beta: f64,
    pub lambda: f64,
    pub modality_names: Vec<String>,
    /// Set when a fit fell back to a default (e.g. uniform weights).
    #[serde(skip)]
    pub warning: Option<String>,
}

impl FusionModel {
    fn new(method: Method, weights: Vec<f64>, modality_names: Vec<String>) -> Self {
        Self {
            method,
            weights,
            beta: 0.0,
            lambda: 0.0,
            modality_names,
            warning: None,
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn with_modality_names(mut self, names: Vec<String>) -> Self {
        self.modality_names = names;
        self
    }

    /// True when the weights sum to one within 1e-12.
    pub fn normalized(&self) -> bool {
        (self.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12
    }

    pub fn weight_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }
}

/// `w . x`, unclamped.
pub fn predict(model: &FusionModel, scores: &[f64]) -> Result<f64> {
    if scores.len() != model.k() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: model.k(),
        });
    }
    Ok(model.weights.iter().zip(scores).map(|(w, x)| w * x).sum())
}

/// Row-wise predictions for a score matrix.
pub fn predict_rows(model: &FusionModel, scores: &DMatrix<f64>) -> Result<Vec<f64>> {
    if scores.ncols() != model.k() {
        return Err(Error::LengthMismatch {
            left: scores.ncols(),
            right: model.k(),
        });
    }
    Ok((scores * model.weight_vector()).iter().copied().collect())
}

pub fn fit_unweighted(k: usize) -> Result<FusionModel> {
    if k == 0 {
        return Err(Error::EmptyGroup("modalities"));
    }
    Ok(FusionModel::new(Method::Unweighted, vec![1.0 / k as f64; k], Vec::new()))
}

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// Weights proportional to `1 / RMSE_k` on the training set. Modalities with
/// zero error share all of the weight.
pub fn fit_weighted(train: &FusionDataset) -> Result<FusionModel> {
    if train.is_empty() || train.k() == 0 {
        return Err(Error::DatasetTooSmall("weighted average needs data".into()));
    }
    let y: Vec<f64> = train.y.iter().copied().collect();
    let errors = (0..train.k())
        .map(|j| {
            let col: Vec<f64> = train.x.column(j).iter().copied().collect();
            metrics::rmse(&col, &y)
        })
        .collect::<Result<Vec<f64>>>()?;
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("modality RMSE"));
    }
    let perfect = errors.iter().filter(|&&e| e == 0.0).count();
    let (weights, warning) = if perfect > 0 {
        let w = errors
            .iter()
            .map(|&e| if e == 0.0 { 1.0 / perfect as f64 } else { 0.0 })
            .collect();
        (w, Some(format!("{perfect} modality(ies) with zero training error")))
    } else {
        (normalize(errors.iter().map(|e| 1.0 / e).collect()), None)
    };
    let mut model = FusionModel::new(Method::Weighted, weights, train.modality_names.clone());
    model.warning = warning;
    Ok(model)
}

/// `delta[i][k] = |male_k - female_k|` for each pair.
pub fn delta_matrix(pairs: &[GenderedPair]) -> Result<DMatrix<f64>> {
    let k = pairs.first().ok_or(Error::EmptyGroup("pairs"))?.k();
    for (row, p) in pairs.iter().enumerate() {
        if p.k() != k || p.female_scores.len() != k {
            return Err(Error::InconsistentK {
                expected: k,
                found: p.k(),
                row,
            });
        }
    }
    Ok(DMatrix::from_fn(pairs.len(), k, |i, j| {
        (pairs[i].male_scores[j] - pairs[i].female_scores[j]).abs()
    }))
}

/// Weights each modality by the number of templates on which its two gender
/// scores differ by at most `tau`, normalized to sum one. Falls back to
/// uniform weights (with a warning) if no modality is ever within `tau`.
pub fn fit_fairness_opt(train: &FusionDataset, tau: f64) -> Result<FusionModel> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!("tau must be in (0, 1], got {tau}")));
    }
    if train.is_empty() {
        return Err(Error::DatasetTooSmall("fairness optimization needs data".into()));
    }
    let counts: Vec<f64> = train
        .delta
        .column_iter()
        .map(|col| col.iter().filter(|&&d| d <= tau + TAU_SLACK).count() as f64)
        .collect();
    let k = counts.len();
    let mut model = if counts.iter().all(|&c| c == 0.0) {
        let mut m = FusionModel::new(Method::FairnessOpt, vec![1.0 / k as f64; k], Vec::new());
        m.warning = Some(format!("no modality within tau={tau} on any template; using uniform weights"));
        m
    } else {
        FusionModel::new(Method::FairnessOpt, normalize(counts), Vec::new())
    };
    model.modality_names = train.modality_names.clone();
    Ok(model)
}

/// Flexible fair regression: the closed-form minimizer of
/// `MSE(w) + beta * P(w) + lambda * |w|^2`.
pub fn fit_ffr(train: &FusionDataset, beta: f64, lambda: f64) -> Result<FusionModel> {
    let w = solver::solve_fair_regression(train, beta, lambda)?;
    let mut model = FusionModel::new(Method::Ffr, w.iter().copied().collect(), train.modality_names.clone());
    model.beta = beta;
    model.lambda = lambda;
    Ok(model)
}

/// Ridge regression without the fairness term: `fit_ffr` at `beta = 0`.
pub fn fit_ols(train: &FusionDataset, lambda: f64) -> Result<FusionModel> {
    let mut model = fit_ffr(train, 0.0, lambda)?;
    model.method = Method::Ols;
    Ok(model)
}

/// Gradient-descent counterpart of [`fit_ffr`]; the result carries the
/// convergence flag instead of failing.
pub fn fit_ffr_oracle(
    train: &FusionDataset,
    beta: f64,
    lambda: f64,
    opts: DescentOptions,
) -> Result<(FusionModel, DescentResult)> {
    if train.is_empty() {
        return Err(Error::DatasetTooSmall("fitting needs at least one row".into()));
    }
    let result = oracle::gradient_descent(train, beta, lambda, opts);
    let mut model = FusionModel::new(
        Method::Ffr,
        result.weights.iter().copied().collect(),
        train.modality_names.clone(),
    );
    model.beta = beta;
    model.lambda = lambda;
    if !result.converged {
        model.warning = Some(format!(
            "gradient descent not converged after {} iterations (|g| = {:e})",
            result.iterations, result.gradient_norm
        ));
    }
    Ok((model, result))
}

/// Fused predictions on the averaged rows and on each gender variant.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedScores {
    pub averaged: Vec<f64>,
    pub male: Vec<f64>,
    pub female: Vec<f64>,
}

pub fn fused_scores(model: &FusionModel, ds: &FusionDataset) -> Result<FusedScores> {
    Ok(FusedScores {
        averaged: predict_rows(model, &ds.x)?,
        male: predict_rows(model, &ds.male)?,
        female: predict_rows(model, &ds.female)?,
    })
}

/// RMSE of the fused averaged-row prediction against truth, and the MAE
/// between the fused male and female predictions.
pub fn evaluate(model: &FusionModel, test: &FusionDataset) -> Result<AuditRow> {
    if test.is_empty() {
        return Err(Error::DatasetTooSmall("evaluation set is empty".into()));
    }
    let fused = fused_scores(model, test)?;
    let y: Vec<f64> = test.y.iter().copied().collect();
    Ok(AuditRow {
        name: model.method.label().to_string(),
        acc_error: metrics::rmse(&fused.averaged, &y)?,
        bias: metrics::bias_mae(&fused.male, &fused.female)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::pair_and_average;
    use std::collections::BTreeMap;

    fn table_one() -> FusionDataset {
        let pair = GenderedPair::new(
            "hurts",
            "m",
            "f",
            vec![-0.9, -0.5, 0.6],
            vec![-0.7, -0.8, -0.9],
        )
        .unwrap();
        let truths = BTreeMap::from([("hurts".to_string(), -0.7)]);
        pair_and_average(&[pair], &truths, &["k1".into(), "k2".into(), "k3".into()]).unwrap()
    }

    fn ds_from(male: Vec<Vec<f64>>, female: Vec<Vec<f64>>, y: Vec<f64>) -> FusionDataset {
        let t = y.len();
        let k = male[0].len();
        FusionDataset::from_scores(
            (0..t).map(|i| format!("t{i}")).collect(),
            DMatrix::from_fn(t, k, |i, j| male[i][j]),
            DMatrix::from_fn(t, k, |i, j| female[i][j]),
            DVector::from_vec(y),
            (0..k).map(|j| format!("m{j}")).collect(),
        )
        .unwrap()
    }

    fn model(weights: Vec<f64>) -> FusionModel {
        FusionModel::new(Method::Ffr, weights, Vec::new())
    }

    #[test]
    fn predict_examples() {
        let ua = fit_unweighted(3).unwrap();
        let p = predict(&ua, &[-0.8, -0.65, -0.15]).unwrap();
        assert!((p - (-1.6 / 3.0)).abs() < 1e-15);
        assert_eq!(predict(&model(vec![1.0, 0.0, 0.0]), &[0.3, -0.9, 0.5]).unwrap(), 0.3);
        assert_eq!(predict(&model(vec![0.5, 0.5]), &[1.0, -1.0]).unwrap(), 0.0);
        assert!(predict(&model(vec![0.5, 0.5]), &[1.0]).is_err());
    }

    #[test]
    fn unweighted() {
        assert_eq!(fit_unweighted(3).unwrap().weights, [1.0 / 3.0; 3]);
        assert_eq!(fit_unweighted(1).unwrap().weights, [1.0]);
        assert!(fit_unweighted(0).is_err());
        let ds = table_one();
        let ua = fit_unweighted(3).unwrap();
        let p = predict_rows(&ua, &ds.x).unwrap()[0];
        assert!((p - (-0.8 - 0.65 - 0.15) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_inverse_rmse() {
        // modality errors are exactly 0.1 and 0.3 on every row
        let y = vec![0.0, 0.5, -0.5, 0.2];
        let rows = |off: f64| y.iter().map(|&v| vec![v + 0.1 * off.signum(), v + 0.3 * off]).collect::<Vec<_>>();
        let ds = ds_from(rows(1.0), rows(1.0), y.clone());
        let w = fit_weighted(&ds).unwrap();
        assert!((w.weights[0] - 0.75).abs() < 1e-12 && (w.weights[1] - 0.25).abs() < 1e-12);
        assert!(w.normalized());

        let same: Vec<Vec<f64>> = y.iter().map(|&v| vec![v + 0.2, v - 0.2]).collect();
        let w = fit_weighted(&ds_from(same.clone(), same, y.clone())).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-15);

        let exact: Vec<Vec<f64>> = y.iter().map(|&v| vec![v + 0.2, v]).collect();
        let w = fit_weighted(&ds_from(exact.clone(), exact, y)).unwrap();
        assert_eq!(w.weights, [0.0, 1.0]);
        assert!(w.warning.is_some());
    }

    #[test]
    fn delta_matrix_rows() {
        let pair = GenderedPair::new("t", "", "", vec![-0.9, -0.5, 0.6], vec![-0.7, -0.8, -0.9]).unwrap();
        let d = delta_matrix(std::slice::from_ref(&pair)).unwrap();
        assert!((d[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((d[(0, 1)] - 0.3).abs() < 1e-15);
        assert_eq!(d[(0, 2)], 1.5);

        let fair = GenderedPair::new("u", "", "", vec![0.1, 0.2, 0.3], vec![0.1, 0.2, 0.3]).unwrap();
        let d = delta_matrix(&[pair.clone(), fair]).unwrap();
        assert_eq!(d.shape(), (2, 3));
        assert!(d.row(1).iter().all(|&v| v == 0.0));

        let short = GenderedPair::new("v", "", "", vec![0.1], vec![0.1]).unwrap();
        assert!(matches!(delta_matrix(&[pair, short]), Err(Error::InconsistentK { .. })));
    }

    #[test]
    fn fairness_opt_table_one() {
        let fo = fit_fairness_opt(&table_one(), 0.2).unwrap();
        assert_eq!(fo.weights, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn fairness_opt_limits() {
        let male = vec![vec![0.1, 0.5, 0.5]; 4];
        let female = vec![vec![0.1, 0.1, -0.5]; 4];
        let fo = fit_fairness_opt(&ds_from(male, female, vec![0.0; 4]), 0.1).unwrap();
        assert_eq!(fo.weights, [1.0, 0.0, 0.0]);

        let male = vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![0.0, 0.0]];
        let female = vec![vec![0.05, 0.05], vec![0.0, 0.0], vec![0.0, 0.0]];
        let fo = fit_fairness_opt(&ds_from(male, female, vec![0.0; 3]), 0.1).unwrap();
        assert_eq!(fo.weights, [0.5, 0.5]);

        let fo = fit_fairness_opt(&ds_from(vec![vec![1.0, -1.0]], vec![vec![-1.0, 1.0]], vec![0.0]), 0.1).unwrap();
        assert_eq!(fo.weights, [0.5, 0.5]);
        assert!(fo.warning.is_some());

        assert!(fit_fairness_opt(&table_one(), 0.0).is_err());
    }

    #[test]
    fn ols_exact_recovery() {
        let xs: Vec<(f64, f64)> = (0..20)
            .map(|i| ((i as f64 * 0.37).sin() * 0.9, (i as f64 * 0.91).cos() * 0.8))
            .collect();
        let y: Vec<f64> = xs.iter().map(|(a, b)| 0.3 * a + 0.7 * b).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&(a, b)| vec![a, b]).collect();
        let ds = ds_from(rows.clone(), rows, y.clone());
        let m = fit_ols(&ds, 0.0).unwrap();
        assert!((m.weights[0] - 0.3).abs() < 1e-10 && (m.weights[1] - 0.7).abs() < 1e-10);
        assert_eq!(m.method, Method::Ols);

        let single: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
        let m = fit_ols(&ds_from(single.clone(), single, y), 0.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_duplicate_columns_singular() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0, i as f64 / 10.0]).collect();
        let y = (0..10).map(|i| i as f64 / 20.0).collect();
        let ds = ds_from(rows.clone(), rows, y);
        assert!(matches!(fit_ols(&ds, 0.0), Err(Error::SingularSystem { .. })));
        assert!(fit_ols(&ds, 1e-3).is_ok());
    }

    #[test]
    fn ffr_rejects_bad_parameters() {
        let ds = table_one();
        assert!(fit_ffr(&ds, -1.0, 0.1).is_err());
        assert!(fit_ffr(&ds, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let ds = table_one();
        let sel = model(vec![1.0, 0.0, 0.0]);
        let row = evaluate(&sel, &ds).unwrap();
        assert!((row.bias - 0.2).abs() < 1e-15);
        assert!((row.acc_error - 0.1).abs() < 1e-15);

        // truth reproduced by modality 0
        let perfect = ds_from(vec![vec![0.3, 0.9]], vec![vec![0.3, -0.2]], vec![0.3]);
        assert_eq!(evaluate(&model(vec![1.0, 0.0]), &perfect).unwrap().acc_error, 0.0);

        // opposite biases cancel under equal weights
        let opp = ds_from(vec![vec![0.2, -0.2]], vec![vec![0.0, 0.0]], vec![0.0]);
        assert_eq!(evaluate(&fit_unweighted(2).unwrap(), &opp).unwrap().bias, 0.0);
    }

    #[test]
    fn model_json_shape() {
        let m = fit_unweighted(2).unwrap().with_modality_names(vec!["a".into(), "b".into()]);
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 5);
        for key in ["method", "weights", "beta", "lambda", "modality_names"] {
            assert!(keys.contains(&key), "{key}");
        }
        assert_eq!(v["method"], "unweighted");
        let back: FusionModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
