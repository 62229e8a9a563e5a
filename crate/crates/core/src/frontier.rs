//! Beta sweeps over the fair regression and selection along the resulting
//! accuracy/bias frontier.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::FusionDataset;
use crate::fusion::{self, FusionModel};
use crate::metrics::{self, AuditRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub acc_error: f64,
    pub bias: f64,
    pub dominated: bool,
}

impl SweepPoint {
    pub fn coords(&self) -> (f64, f64) {
        (self.acc_error, self.bias)
    }
}

/// A log-spaced beta grid, optionally preceded by `beta = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub include_zero: bool,
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self {
            lo: 1e-5,
            hi: 1e2,
            n: 50,
            include_zero: true,
        }
    }
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n + 1);
        if self.include_zero {
            out.push(0.0);
        }
        match self.n {
            0 => {}
            1 => out.push(self.lo),
            n => {
                let (a, b) = (self.lo.log10(), self.hi.log10());
                out.extend((0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)));
            }
        }
        out
    }
}

impl FromStr for BetaGrid {
    type Err = Error;

    /// Parses `lo:hi:n`; a trailing `log` segment is accepted for readability.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("beta grid {s:?} is not lo:hi:n"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let parts = match parts.as_slice() {
            [lo, hi, n] | [lo, hi, n, "log"] => [*lo, *hi, *n],
            _ => return Err(bad()),
        };
        let n = parts[2].trim_end_matches("(log)").parse::<usize>().map_err(|_| bad())?;
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
            return Err(bad());
        }
        Ok(Self {
            lo,
            hi,
            n,
            include_zero: true,
        })
    }
}

impl fmt::Display for BetaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::EmptyGroup("beta grid"));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::InvalidParameter("betas must be finite and >= 0".into()));
    }
    if betas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "betas must be sorted ascending without duplicates".into(),
        ));
    }
    Ok(())
}

/// Fits the fair regression on `train` for each beta and evaluates it on `test`.
pub fn sweep(train: &FusionDataset, test: &FusionDataset, betas: &[f64], lambda: f64) -> Result<Vec<SweepPoint>> {
    Ok(sweep_models(train, test, betas, lambda)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

/// Like [`sweep`], keeping the fitted model next to each point.
pub fn sweep_models(
    train: &FusionDataset,
    test: &FusionDataset,
    betas: &[f64],
    lambda: f64,
) -> Result<Vec<(FusionModel, SweepPoint)>> {
    check_betas(betas)?;
    let mut out = Vec::with_capacity(betas.len());
    for &beta in betas {
        let fit = || -> Result<(FusionModel, AuditRow)> {
            let model = fusion::fit_ffr(train, beta, lambda)?;
            let row = fusion::evaluate(&model, test)?;
            Ok((model, row))
        };
        let (model, row) = fit().map_err(|e| e.context(format!("beta={beta}")))?;
        out.push((
            model,
            SweepPoint {
                beta,
                acc_error: row.acc_error,
                bias: row.bias,
                dominated: false,
            },
        ));
    }
    let coords: Vec<_> = out.iter().map(|(_, p)| p.coords()).collect();
    for ((_, p), d) in out.iter_mut().zip(metrics::pareto_filter(&coords)) {
        p.dominated = d;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Euclidean distance in raw (acc_error, bias) units.
    #[default]
    Raw,
    /// Each axis min-max scaled over the sweep and the two anchors first.
    Normalized,
}

impl FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(DistanceMode::Raw),
            "normalized" => Ok(DistanceMode::Normalized),
            _ => Err(Error::InvalidParameter(format!("unknown distance mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtopiaSelection {
    pub utopia: (f64, f64),
    pub chosen_beta: f64,
    pub chosen_point: SweepPoint,
    /// Distance to the utopia point, in the units of the chosen mode.
    pub distance: f64,
    pub mode: DistanceMode,
}

/// Picks the sweep point closest to the utopia point made of the OLS accuracy
/// error and the fairness-only bias. Ties go to the smaller beta.
pub fn utopia_select(
    sweep: &[SweepPoint],
    ols_point: (f64, f64),
    fo_point: (f64, f64),
    mode: DistanceMode,
) -> Result<UtopiaSelection> {
    if sweep.is_empty() {
        return Err(Error::EmptyGroup("sweep"));
    }
    let utopia = (ols_point.0, fo_point.1);
    let (scale_acc, scale_bias) = match mode {
        DistanceMode::Raw => ((0.0, 1.0), (0.0, 1.0)),
        DistanceMode::Normalized => {
            let range = |f: fn(&(f64, f64)) -> f64| {
                let vals = sweep.iter().map(|p| p.coords()).chain([ols_point, fo_point]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    (lo.min(f(&c)), hi.max(f(&c)))
                });
                let span = hi - lo;
                (lo, if span > 0.0 { span } else { 1.0 })
            };
            (range(|c| c.0), range(|c| c.1))
        }
    };
    let scaled = |c: (f64, f64)| ((c.0 - scale_acc.0) / scale_acc.1, (c.1 - scale_bias.0) / scale_bias.1);
    let u = scaled(utopia);
    let distance = |p: &SweepPoint| {
        let s = scaled(p.coords());
        (s.0 - u.0).hypot(s.1 - u.1)
    };
    let chosen = sweep
        .iter()
        .min_by(|a, b| {
            distance(a)
                .total_cmp(&distance(b))
                .then(a.beta.total_cmp(&b.beta))
        })
        .expect("non-empty");
    Ok(UtopiaSelection {
        utopia,
        chosen_beta: chosen.beta,
        chosen_point: *chosen,
        distance: distance(chosen),
        mode,
    })
}

/// Lowest-bias point whose accuracy error stays within
/// `reference.acc_error * (1 + budget)`; ties go to the smaller beta.
pub fn budget_query(sweep: &[SweepPoint], reference: &SweepPoint, budget: f64) -> Result<SweepPoint> {
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::InvalidParameter(format!("budget must be >= 0, got {budget}")));
    }
    if reference.acc_error.is_nan() || reference.acc_error <= 0.0 {
        return Err(Error::InvalidParameter(
            "budget reference needs a positive accuracy error".into(),
        ));
    }
    let limit = reference.acc_error * (1.0 + budget);
    sweep
        .iter()
        .filter(|p| p.acc_error <= limit)
        .min_by(|a, b| match a.bias.total_cmp(&b.bias) {
            Ordering::Equal => a.beta.total_cmp(&b.beta),
            o => o,
        })
        .copied()
        .ok_or(Error::EmptyBudgetSet(budget))
}

/// A budget query answer relative to its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAnswer {
    pub budget: f64,
    pub point: SweepPoint,
    /// `point.acc_error / reference.acc_error - 1`.
    pub accuracy_loss: f64,
    /// `1 - point.bias / reference.bias`; zero when the reference is unbiased.
    pub bias_reduction: f64,
}

pub fn budget_answer(sweep: &[SweepPoint], reference: &SweepPoint, budget: f64) -> Result<BudgetAnswer> {
    let point = budget_query(sweep, reference, budget)?;
    Ok(BudgetAnswer {
        budget,
        point,
        accuracy_loss: point.acc_error / reference.acc_error - 1.0,
        bias_reduction: if reference.bias > 0.0 {
            1.0 - point.bias / reference.bias
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(beta: f64, acc: f64, bias: f64) -> SweepPoint {
        SweepPoint {
            beta,
            acc_error: acc,
            bias,
            dominated: false,
        }
    }

    #[test]
    fn grid_values() {
        let g: BetaGrid = "1e-4:1e1:6".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], 0.0);
        for (i, b) in v[1..].iter().enumerate() {
            let want = 10f64.powi(i as i32 - 4);
            assert!((b / want - 1.0).abs() < 1e-12, "{b} vs {want}");
        }
        assert_eq!(BetaGrid::default().values().len(), 51);
        assert!("1:0.1:5".parse::<BetaGrid>().is_err());
        assert!("0:1:5".parse::<BetaGrid>().is_err());
        assert!("1e-3:1:5:log".parse::<BetaGrid>().is_ok());
    }

    #[test]
    fn utopia_exact_hit() {
        let s = [pt(0.0, 0.5, 0.3), pt(0.1, 0.55, 0.1), pt(1.0, 0.7, 0.05)];
        let sel = utopia_select(&s, (0.55, 0.3), (0.9, 0.1), DistanceMode::Raw).unwrap();
        assert_eq!(sel.chosen_beta, 0.1);
        assert_eq!(sel.distance, 0.0);
        assert_eq!(sel.utopia, (0.55, 0.1));
    }

    #[test]
    fn utopia_tie_prefers_smaller_beta() {
        let s = [pt(2.0, 0.0, 1.0), pt(1.0, 1.0, 0.0)];
        let sel = utopia_select(&s, (0.0, 9.0), (9.0, 0.0), DistanceMode::Raw).unwrap();
        assert_eq!(sel.chosen_beta, 1.0);
        assert!(utopia_select(&[], (0.0, 0.0), (0.0, 0.0), DistanceMode::Raw).is_err());
    }

    #[test]
    fn utopia_normalized_rescales_axes() {
        // the bias axis spans only 0.01, so normalizing magnifies bias gaps
        let s = [pt(0.0, 0.50, 0.02), pt(1.0, 0.55, 0.011)];
        let (ols, fo) = ((0.50, 0.02), (0.60, 0.01));
        let raw = utopia_select(&s, ols, fo, DistanceMode::Raw).unwrap();
        assert_eq!(raw.chosen_beta, 0.0);
        let norm = utopia_select(&s, ols, fo, DistanceMode::Normalized).unwrap();
        assert_eq!(norm.chosen_beta, 1.0);
        assert!((norm.distance - 0.5f64.hypot(0.1)).abs() < 1e-12);
    }

    #[test]
    fn budget_examples() {
        let s = [pt(0.0, 0.5, 0.3), pt(0.1, 0.5, 0.25), pt(1.0, 0.54, 0.1), pt(10.0, 0.7, 0.01)];
        assert_eq!(budget_query(&s, &s[0], 0.0).unwrap().beta, 0.1);
        assert_eq!(budget_query(&s, &s[0], 0.10).unwrap().beta, 1.0);
        assert_eq!(budget_query(&s, &s[0], 1.0).unwrap().beta, 10.0);
        assert!(matches!(budget_query(&s[1..], &pt(0.0, 0.1, 0.3), 0.1), Err(Error::EmptyBudgetSet(_))));
        assert!(budget_query(&s, &pt(0.0, 0.0, 0.3), 0.1).is_err());

        let a = budget_answer(&s, &s[0], 0.10).unwrap();
        assert!((a.accuracy_loss - 0.08).abs() < 1e-12);
        assert!((a.bias_reduction - (1.0 - 0.1 / 0.3)).abs() < 1e-12);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        assert!(check_betas(&[]).is_err());
        assert!(check_betas(&[0.1, 0.1]).is_err());
        assert!(check_betas(&[1.0, 0.1]).is_err());
        assert!(check_betas(&[-1.0]).is_err());
        assert!(check_betas(&[0.0, 1e-3, 1.0]).is_ok());
    }

    fn points() -> impl Strategy<Value = Vec<SweepPoint>> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (a, b))| pt(i as f64 * 0.5, a, b))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn utopia_order_invariant(s in points(), ols in (0.0f64..1.0, 0.0f64..1.0), fo in (0.0f64..1.0, 0.0f64..1.0)) {
            let a = utopia_select(&s, ols, fo, DistanceMode::Raw).unwrap();
            let rev: Vec<_> = s.iter().rev().copied().collect();
            let b = utopia_select(&rev, ols, fo, DistanceMode::Raw).unwrap();
            prop_assert_eq!(a.chosen_beta, b.chosen_beta);
            let brute = s.iter().map(|p| (p.acc_error - ols.0).hypot(p.bias - fo.1)).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(a.distance, brute);
        }

        #[test]
        fn budget_monotone(s in points(), r in 0usize..40, b1 in 0.0f64..0.5, extra in 0.0f64..0.5) {
            let reference = s[r % s.len()];
            prop_assume!(reference.acc_error > 0.0);
            let small = budget_query(&s, &reference, b1).unwrap();
            let large = budget_query(&s, &reference, b1 + extra).unwrap();
            prop_assert!(large.bias <= small.bias);
        }
    }
}
