//! Higher-level runs shared by the CLI and the acceptance suite: corpus audit,
//! baseline fits, and the full frontier study.

use serde::{Deserialize, Serialize};

use crate::corpus::FusionDataset;
use crate::frontier::{self, BudgetAnswer, DistanceMode, SweepPoint, UtopiaSelection};
use crate::fusion::{self, FusionModel, Method};
use crate::metrics::{self, AuditRow};
use crate::Result;

/// One line of an audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub name: String,
    pub acc_error: f64,
    pub bias: f64,
    /// `mean(male) - mean(female)`.
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl AuditEntry {
    pub fn row(&self) -> AuditRow {
        AuditRow {
            name: self.name.clone(),
            acc_error: self.acc_error,
            bias: self.bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub models: Vec<AuditEntry>,
}

fn audit_scores(name: &str, averaged: &[f64], male: &[f64], female: &[f64], truth: &[f64]) -> Result<AuditEntry> {
    let tt = metrics::paired_t_test(male, female)?;
    Ok(AuditEntry {
        name: name.to_string(),
        acc_error: metrics::rmse(averaged, truth)?,
        bias: metrics::bias_mae(male, female)?,
        mean_difference: metrics::mean_difference(male, female)?,
        t: tt.t_statistic,
        df: tt.degrees_of_freedom,
        p: tt.p_value,
        degenerate: tt.degenerate,
    })
}

/// Accuracy error, bias and paired t-test for every modality of a dataset.
pub fn audit_modalities(ds: &FusionDataset) -> Result<AuditReport> {
    let truth: Vec<f64> = ds.y.iter().copied().collect();
    let models = (0..ds.k())
        .map(|j| {
            let averaged: Vec<f64> = ds.x.column(j).iter().copied().collect();
            audit_scores(
                &ds.modality_names[j],
                &averaged,
                &ds.male_column(j),
                &ds.female_column(j),
                &truth,
            )
        })
        .collect::<Result<_>>()?;
    Ok(AuditReport { models })
}

/// Audit line for a fused model on a dataset.
pub fn audit_model(name: &str, model: &FusionModel, ds: &FusionDataset) -> Result<AuditEntry> {
    let fused = fusion::fused_scores(model, ds)?;
    let truth: Vec<f64> = ds.y.iter().copied().collect();
    audit_scores(name, &fused.averaged, &fused.male, &fused.female, &truth)
}

#[derive(Debug, Clone)]
pub struct FittedBaseline {
    pub model: FusionModel,
    pub row: AuditRow,
}

impl FittedBaseline {
    pub fn coords(&self) -> (f64, f64) {
        (self.row.acc_error, self.row.bias)
    }
}

#[derive(Debug, Clone)]
pub struct Baselines {
    pub unweighted: FittedBaseline,
    pub weighted: FittedBaseline,
    pub ols: FittedBaseline,
    pub fairness_opt: FittedBaseline,
}

impl Baselines {
    pub fn all(&self) -> [&FittedBaseline; 4] {
        [&self.unweighted, &self.weighted, &self.ols, &self.fairness_opt]
    }
}

/// Fits a single method on `train` and evaluates it on `test`.
pub fn fit_method(
    method: Method,
    train: &FusionDataset,
    test: &FusionDataset,
    tau: f64,
    beta: f64,
    lambda: f64,
) -> Result<FittedBaseline> {
    let model = match method {
        Method::Unweighted => fusion::fit_unweighted(train.k())?.with_modality_names(train.modality_names.clone()),
        Method::Weighted => fusion::fit_weighted(train)?,
        Method::Ols => fusion::fit_ols(train, lambda)?,
        Method::FairnessOpt => fusion::fit_fairness_opt(train, tau)?,
        Method::Ffr => fusion::fit_ffr(train, beta, lambda)?,
    };
    let row = fusion::evaluate(&model, test)?;
    Ok(FittedBaseline { model, row })
}

pub fn fit_baselines(train: &FusionDataset, test: &FusionDataset, tau: f64, lambda: f64) -> Result<Baselines> {
    let fit = |m| fit_method(m, train, test, tau, 0.0, lambda);
    Ok(Baselines {
        unweighted: fit(Method::Unweighted)?,
        weighted: fit(Method::Weighted)?,
        ols: fit(Method::Ols)?,
        fairness_opt: fit(Method::FairnessOpt)?,
    })
}

#[derive(Debug, Clone)]
pub struct FrontierStudy {
    pub baselines: Baselines,
    pub sweep: Vec<(FusionModel, SweepPoint)>,
    pub selection: UtopiaSelection,
    /// The OLS evaluation, used as the budget reference.
    pub reference: SweepPoint,
    pub budgets: Vec<BudgetAnswer>,
}

impl FrontierStudy {
    pub fn points(&self) -> Vec<SweepPoint> {
        self.sweep.iter().map(|(_, p)| *p).collect()
    }

    pub fn chosen_model(&self) -> &FusionModel {
        self.sweep
            .iter()
            .find(|(_, p)| p.beta == self.selection.chosen_beta)
            .map(|(m, _)| m)
            .expect("selection comes from the sweep")
    }

    /// Baselines that dominate the selected point, by name.
    pub fn baselines_dominating_choice(&self) -> Vec<&'static str> {
        let chosen = self.selection.chosen_point.coords();
        self.baselines
            .all()
            .into_iter()
            .filter(|b| {
                let (a, c) = b.coords();
                a <= chosen.0 && c <= chosen.1 && (a < chosen.0 || c < chosen.1)
            })
            .map(|b| b.model.method.label())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub betas: Vec<f64>,
    pub lambda: f64,
    pub tau: f64,
    pub distance: DistanceMode,
    pub budgets: Vec<f64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            betas: frontier::BetaGrid::default().values(),
            lambda: fusion::DEFAULT_LAMBDA,
            tau: fusion::DEFAULT_TAU,
            distance: DistanceMode::Raw,
            budgets: vec![0.10],
        }
    }
}

/// Baselines, beta sweep, utopia selection and budget answers on one split.
pub fn frontier_study(train: &FusionDataset, test: &FusionDataset, opts: &StudyOptions) -> Result<FrontierStudy> {
    let baselines = fit_baselines(train, test, opts.tau, opts.lambda)?;
    let sweep = frontier::sweep_models(train, test, &opts.betas, opts.lambda)?;
    let points: Vec<SweepPoint> = sweep.iter().map(|(_, p)| *p).collect();
    let selection = frontier::utopia_select(
        &points,
        baselines.ols.coords(),
        baselines.fairness_opt.coords(),
        opts.distance,
    )?;
    let reference = SweepPoint {
        beta: 0.0,
        acc_error: baselines.ols.row.acc_error,
        bias: baselines.ols.row.bias,
        dominated: false,
    };
    let budgets = opts
        .budgets
        .iter()
        .map(|&b| frontier::budget_answer(&points, &reference, b))
        .collect::<Result<_>>()?;
    Ok(FrontierStudy {
        baselines,
        sweep,
        selection,
        reference,
        budgets,
    })
}
