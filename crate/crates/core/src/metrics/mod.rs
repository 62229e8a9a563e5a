//! Accuracy and fairness measurements.

pub mod student_t;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Accuracy error and gender bias of one scorer or fused model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub name: String,
    pub acc_error: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Set when the differences have zero spread, so `t` is 0 or infinite.
    pub degenerate: bool,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyGroup("metric input"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predictions, truth)?;
    let sq = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>();
    Ok((sq / predictions.len() as f64).sqrt())
}

/// Mean absolute gap between the male and female variant of each template.
pub fn bias_mae(male: &[f64], female: &[f64]) -> Result<f64> {
    check_lengths(male, female)?;
    Ok(male.iter().zip(female).map(|(m, f)| (m - f).abs()).sum::<f64>() / male.len() as f64)
}

/// `mean(pos) - mean(neg)`; signed, groups may differ in size.
pub fn mean_difference(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::EmptyGroup("mean difference group"));
    }
    Ok(mean(scores_pos) - mean(scores_neg))
}

/// Two-sided paired t-test on `male_i - female_i`.
pub fn paired_t_test(male: &[f64], female: &[f64]) -> Result<TTestResult> {
    check_lengths(male, female)?;
    let n = male.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = male.iter().zip(female).map(|(m, f)| m - f).collect();
    let md = mean(&d);
    let var = d.iter().map(|x| (x - md) * (x - md)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = n - 1;
    if sd <= 1e-12 * md.abs() || sd == 0.0 {
        let (t, p) = if md == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(md), 0.0)
        };
        return Ok(TTestResult {
            t_statistic: t,
            degrees_of_freedom: df,
            p_value: p,
            degenerate: true,
        });
    }
    let t = md / (sd / (n as f64).sqrt());
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t::two_sided_p(t, df as f64),
        degenerate: false,
    })
}

/// Flags every point that another point weakly beats in both coordinates and
/// strictly in one. Identical points do not dominate each other.
///
/// Sorts by accuracy error, then sweeps groups of equal accuracy error while
/// tracking the lowest bias seen at strictly smaller error.
pub fn pareto_filter(points: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .0
            .total_cmp(&points[j].0)
            .then(points[i].1.total_cmp(&points[j].1))
    });
    let mut dominated = vec![false; points.len()];
    let mut best_before = f64::INFINITY;
    let mut start = 0;
    while start < order.len() {
        let acc = points[order[start]].0;
        let mut end = start;
        while end < order.len() && points[order[end]].0 == acc {
            end += 1;
        }
        // group is sorted by bias; its first entry has the group minimum
        let group_min = points[order[start]].1;
        for &i in &order[start..end] {
            let b = points[i].1;
            dominated[i] = best_before <= b || group_min < b;
        }
        best_before = best_before.min(group_min);
        start = end;
    }
    dominated
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(points: &[(f64, f64)]) -> Vec<bool> {
        points
            .iter()
            .map(|p| {
                points.iter().any(|q| {
                    q.0 <= p.0 && q.1 <= p.1 && (q.0 < p.0 || q.1 < p.1)
                })
            })
            .collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!((rmse(&[-0.8], &[-0.7]).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn bias_mae_examples() {
        assert_eq!(bias_mae(&[0.3, -0.2], &[0.3, -0.2]).unwrap(), 0.0);
        assert_eq!(bias_mae(&[0.6], &[-0.9]).unwrap(), 1.5);
        assert!((bias_mae(&[0.2, 0.4], &[0.1, 0.1]).unwrap() - 0.2).abs() < 1e-15);
        assert!(bias_mae(&[0.2], &[]).is_err());
    }

    #[test]
    fn mean_difference_examples() {
        assert_eq!(mean_difference(&[0.5, -0.5], &[0.0]).unwrap(), 0.0);
        assert_eq!(mean_difference(&[1.0, 1.0], &[0.0]).unwrap(), 1.0);
        assert!(mean_difference(&[0.2, 0.4], &[0.5, 0.1]).unwrap().abs() < 1e-15);
        assert!(matches!(mean_difference(&[], &[1.0]), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn t_test_identical() {
        let r = paired_t_test(&[0.1, 0.5, -0.3], &[0.1, 0.5, -0.3]).unwrap();
        assert_eq!((r.t_statistic, r.p_value, r.degrees_of_freedom), (0.0, 1.0, 2));
        assert!(r.degenerate);
    }

    // scipy.stats.ttest_1samp([0.1, 0.2, 0.3, 0.2], 0)
    #[test]
    fn t_test_reference_small() {
        let r = paired_t_test(&[0.1, 0.2, 0.3, 0.2], &[0.0; 4]).unwrap();
        assert!((r.t_statistic - 4.898_979_485_566_357).abs() < 1e-9);
        assert_eq!(r.degrees_of_freedom, 3);
        assert!((r.p_value - 0.016_276_603_459_428_55).abs() < 1e-10);
        assert!(!r.degenerate);
    }

    // scipy.stats.ttest_rel
    #[test]
    fn t_test_reference_rel() {
        let m = [0.5, -0.2, 0.1, 0.9, -0.4, 0.3];
        let f = [0.1, -0.1, 0.3, 0.4, -0.6, 0.0];
        let r = paired_t_test(&m, &f).unwrap();
        assert!((r.t_statistic - 1.611_386_522_099_881_3).abs() < 1e-9);
        assert!((r.p_value - 0.168_012_320_398_241_7).abs() < 1e-10);
    }

    #[test]
    fn t_test_constant_shift() {
        let r = paired_t_test(&[0.5, 0.5, 0.5], &[0.25, 0.25, 0.25]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.t_statistic, f64::INFINITY);
        assert!(paired_t_test(&[0.1], &[0.2]).is_err());
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_filter(&[(1.0, 0.0), (0.0, 1.0)]), [false, false]);
        assert_eq!(pareto_filter(&[(1.0, 1.0), (0.5, 0.5)]), [true, false]);
        assert_eq!(pareto_filter(&[(0.5, 0.5), (0.5, 0.5)]), [false, false]);
        assert_eq!(pareto_filter(&[(0.5, 0.5), (0.5, 0.4), (0.4, 0.5)]), [true, false, false]);
        assert!(pareto_filter(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn pareto_matches_brute_force(pts in prop::collection::vec((0u8..12, 0u8..12), 1..200)) {
            // coarse grid to force ties
            let pts: Vec<(f64, f64)> = pts.into_iter().map(|(a, b)| (a as f64 / 10.0, b as f64 / 10.0)).collect();
            prop_assert_eq!(pareto_filter(&pts), brute_force(&pts));
        }

        #[test]
        fn pareto_order_independent(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60)) {
            let flags = pareto_filter(&pts);
            let rev: Vec<_> = pts.iter().rev().copied().collect();
            let mut rflags = pareto_filter(&rev);
            rflags.reverse();
            prop_assert_eq!(flags, rflags);
        }

        #[test]
        fn mean_difference_antisymmetric(a in prop::collection::vec(-1.0f64..1.0, 1..30), b in prop::collection::vec(-1.0f64..1.0, 1..30)) {
            prop_assert_eq!(mean_difference(&a, &b).unwrap(), -mean_difference(&b, &a).unwrap());
        }

        #[test]
        fn t_test_p_symmetric(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..40)) {
            let (m, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = paired_t_test(&m, &f).unwrap();
            let b = paired_t_test(&f, &m).unwrap();
            prop_assert!((0.0..=1.0).contains(&a.p_value));
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        }

        #[test]
        fn errors_nonnegative(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(rmse(&p, &t).unwrap() >= 0.0);
            prop_assert!(bias_mae(&p, &t).unwrap() >= 0.0);
            prop_assert_eq!(rmse(&p, &p).unwrap(), 0.0);
        }
    }
}
