use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::{Format, Settings};
use crate::blackbox::{score_corpus, Provider};
use crate::corpus::{self, FusionDataset};
use crate::demo::DemoScenario;
use crate::experiment::{self, AuditEntry, AuditReport, FrontierStudy, StudyOptions};
use crate::fusion::Method;
use crate::{Error, Result};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

/// Writes every file only after all of them have been produced in memory.
fn write_outputs(dir: &Path, files: Vec<(PathBuf, Vec<u8>)>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).context(dir.display().to_string()))?;
    for (path, bytes) in files {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    }
    Ok(())
}

fn csv_bytes<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub(super) fn generate(
    s: &Settings,
    demo: bool,
    templates: Option<PathBuf>,
    terms: Option<PathBuf>,
    annotations: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let mut files = Vec::new();
    let (names, pairs, truths) = if demo {
        let d = DemoScenario::with_seed(s.seed).build()?;
        let truths: BTreeMap<String, f64> = d
            .dataset
            .template_ids
            .iter()
            .cloned()
            .zip(d.dataset.y.iter().copied())
            .collect();
        files.push((s.out.join("templates.csv"), csv_bytes(|b| corpus::write_templates(b, &d.templates))?));
        files.push((s.out.join("identity_terms.csv"), csv_bytes(|b| corpus::write_terms(b, &d.terms))?));
        files.push((s.out.join("annotations.csv"), csv_bytes(|b| corpus::write_annotations(b, &d.annotations))?));
        (d.modality_names, d.pairs, truths)
    } else {
        let cfg = &s.config;
        let templates_path = templates
            .or_else(|| cfg.templates.clone())
            .ok_or_else(|| Error::InvalidParameter("generate needs --templates (or --demo)".into()))?;
        let mut templates = corpus::read_templates(open(&templates_path)?, &label(&templates_path))?;
        let terms = match terms.or_else(|| cfg.terms.clone()) {
            Some(p) => corpus::read_terms(open(&p)?, &label(&p))?,
            None => corpus::default_terms(),
        };
        if let Some(p) = annotations.or_else(|| cfg.annotations.clone()) {
            let records = corpus::read_annotations(open(&p)?, &label(&p))?;
            let threshold = cfg.consistency_threshold.unwrap_or(0.3);
            let aggregated = corpus::aggregate_annotations(&records, threshold)?;
            for t in &mut templates {
                if let Some(&truth) = aggregated.get(&t.template_id) {
                    t.truth = truth;
                }
            }
        }
        if cfg.providers.is_empty() {
            return Err(Error::InvalidParameter(
                "no providers configured; add [[providers]] to --config or use --demo".into(),
            ));
        }
        let providers = cfg.providers.iter().map(Provider::open).collect::<Result<Vec<_>>>()?;
        let entries = corpus::expand_corpus(&templates, &terms)?;
        let pairs = score_corpus(&providers, &entries)?;
        let truths = entries.iter().map(|e| (e.instance_id(), e.truth)).collect();
        let names = cfg.providers.iter().map(|p| p.name.clone()).collect();
        (names, pairs, truths)
    };
    let corpus_bytes = csv_bytes(|b| corpus::write_corpus(b, &names, &pairs, &truths))?;
    files.push((s.corpus.clone(), corpus_bytes));
    write_outputs(&s.out, files)?;
    writeln!(
        stdout,
        "wrote {} rows ({} pairs x 2 genders, {} modalities) to {}",
        pairs.len() * 2,
        pairs.len(),
        names.len(),
        s.corpus.display()
    )?;
    Ok(())
}

fn load_dataset(s: &Settings) -> Result<FusionDataset> {
    let table = corpus::read_corpus(open(&s.corpus)?, &label(&s.corpus))?;
    corpus::pair_and_average(&table.pairs, &table.truths, &table.modality_names)
}

fn load_split(s: &Settings) -> Result<(FusionDataset, FusionDataset)> {
    let mut ds = load_dataset(s)?;
    if s.intercept {
        ds = ds.with_intercept();
    }
    corpus::split(&ds, s.split, s.seed)
}

fn fmt_p(p: f64) -> String {
    if p == 0.0 {
        "0".to_string()
    } else if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn audit_table(title: &str, entries: &[AuditEntry]) -> String {
    let width = entries.iter().map(|e| e.name.len()).max().unwrap_or(0).max(10);
    let mut out = format!("{title}\n{:<width$}  {:>9}  {:>7}  {:>9}  {:>9}  {:>9}\n", "model", "acc_error", "bias", "mean_diff", "t", "p");
    for e in entries {
        out.push_str(&format!(
            "{:<width$}  {:>9.4}  {:>7.4}  {:>9.4}  {:>9.3}  {:>9}\n",
            e.name,
            e.acc_error,
            e.bias,
            e.mean_difference,
            e.t,
            fmt_p(e.p)
        ));
    }
    out
}

fn audit_csv(entries: &[AuditEntry]) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["name", "acc_error", "bias", "mean_difference", "t", "df", "p"])?;
        for e in entries {
            w.write_record([
                e.name.clone(),
                e.acc_error.to_string(),
                e.bias.to_string(),
                e.mean_difference.to_string(),
                e.t.to_string(),
                e.df.to_string(),
                e.p.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub(super) fn audit(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(s)?;
    let report = experiment::audit_modalities(&ds)?;
    let json = to_json(&report);
    write_outputs(&s.out, vec![(s.out.join("audit.json"), json.clone())])?;
    match s.format {
        Format::Json => stdout.write_all(&json)?,
        Format::Csv => stdout.write_all(&audit_csv(&report.models)?)?,
        Format::Table => write!(
            stdout,
            "{}",
            audit_table(&format!("Audit over {} gendered pairs", ds.len()), &report.models)
        )?,
    }
    Ok(())
}

#[derive(Debug, Clone, serde::Deserialize, Serialize)]
struct FitRecord {
    name: String,
    method: Method,
    beta: f64,
    lambda: f64,
    acc_error: f64,
    bias: f64,
}

#[derive(Debug, Default, serde::Deserialize, Serialize)]
struct FitReport {
    models: Vec<FitRecord>,
}

pub(super) fn fit(s: &Settings, method: Method, stdout: &mut dyn Write) -> Result<()> {
    let beta = match (method, s.beta) {
        (Method::Ffr, Some(b)) => b,
        (Method::Ffr, None) => return Err(Error::InvalidParameter("fit ffr needs --beta".into())),
        _ => 0.0,
    };
    let (train, test) = load_split(s)?;
    let fitted = experiment::fit_method(method, &train, &test, s.tau, beta, s.lambda)
        .map_err(|e| e.context(format!("fitting {method} (beta={beta}, lambda={})", s.lambda)))?;
    let name = match method {
        Method::Ffr => format!("{} (beta={beta})", method.label()),
        _ => method.label().to_string(),
    };
    let record = FitRecord {
        name: name.clone(),
        method,
        beta: fitted.model.beta,
        lambda: fitted.model.lambda,
        acc_error: fitted.row.acc_error,
        bias: fitted.row.bias,
    };
    let report_path = s.out.join("fit_report.json");
    let mut report: FitReport = fs::read(&report_path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    match report.models.iter_mut().find(|r| r.name == name) {
        Some(existing) => *existing = record.clone(),
        None => report.models.push(record.clone()),
    }
    let model_path = s.out.join(format!("model_{}.json", method.key()));
    write_outputs(
        &s.out,
        vec![(model_path.clone(), to_json(&fitted.model)), (report_path, to_json(&report))],
    )?;
    if let Some(w) = &fitted.model.warning {
        writeln!(stdout, "warning: {w}")?;
    }
    match s.format {
        Format::Json => stdout.write_all(&to_json(&record))?,
        Format::Csv => writeln!(stdout, "name,acc_error,bias\n{},{},{}", name, record.acc_error, record.bias)?,
        Format::Table => {
            let weights: Vec<String> = fitted
                .model
                .modality_names
                .iter()
                .zip(&fitted.model.weights)
                .map(|(n, w)| format!("{n}={w:.4}"))
                .collect();
            writeln!(stdout, "{name}: acc_error {:.4}  bias {:.4}", record.acc_error, record.bias)?;
            writeln!(stdout, "weights: {}", weights.join(", "))?;
            writeln!(stdout, "model written to {}", model_path.display())?;
        }
    }
    Ok(())
}

fn study_options(s: &Settings) -> StudyOptions {
    StudyOptions {
        betas: s.betas.clone(),
        lambda: s.lambda,
        tau: s.tau,
        distance: s.distance,
        budgets: s.budgets.clone(),
    }
}

fn frontier_csv(study: &FrontierStudy) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["beta", "acc_error", "bias", "dominated"])?;
        for p in study.points() {
            w.write_record([
                p.beta.to_string(),
                p.acc_error.to_string(),
                p.bias.to_string(),
                p.dominated.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn study_json(s: &Settings, study: &FrontierStudy) -> serde_json::Value {
    let baselines: Vec<_> = study
        .baselines
        .all()
        .iter()
        .map(|b| {
            json!({
                "name": b.model.method.label(),
                "method": b.model.method,
                "acc_error": b.row.acc_error,
                "bias": b.row.bias,
                "weights": b.model.weights,
            })
        })
        .collect();
    json!({
        "seed": s.seed,
        "split": s.split,
        "tau": s.tau,
        "lambda": s.lambda,
        "baselines": baselines,
        "selection": study.selection,
        "chosen_weights": study.chosen_model().weights,
        "dominated_by_baselines": study.baselines_dominating_choice(),
        "reference": study.reference,
        "budgets": study.budgets,
    })
}

fn study_text(study: &FrontierStudy) -> String {
    let points = study.points();
    let frontier = points.iter().filter(|p| !p.dominated).count();
    let sel = &study.selection;
    let mut out = format!(
        "{} sweep points, {} non-dominated\nutopia (acc_error {:.4}, bias {:.4}) -> beta {} at ({:.4}, {:.4}), distance {:.4}\n",
        points.len(),
        frontier,
        sel.utopia.0,
        sel.utopia.1,
        sel.chosen_beta,
        sel.chosen_point.acc_error,
        sel.chosen_point.bias,
        sel.distance
    );
    let dominating = study.baselines_dominating_choice();
    if !dominating.is_empty() {
        out.push_str(&format!("selected point is dominated by: {}\n", dominating.join(", ")));
    }
    for b in &study.budgets {
        out.push_str(&format!(
            "budget {:.0}%: beta {} at ({:.4}, {:.4}); accuracy loss {:.1}%, bias reduction {:.1}% vs OLS\n",
            b.budget * 100.0,
            b.point.beta,
            b.point.acc_error,
            b.point.bias,
            b.accuracy_loss * 100.0,
            b.bias_reduction * 100.0
        ));
    }
    out
}

pub(super) fn sweep(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let (train, test) = load_split(s)?;
    let study = experiment::frontier_study(&train, &test, &study_options(s))?;
    let csv = frontier_csv(&study)?;
    let json = to_json(&study_json(s, &study));
    write_outputs(
        &s.out,
        vec![(s.out.join("frontier.csv"), csv.clone()), (s.out.join("sweep.json"), json.clone())],
    )?;
    match s.format {
        Format::Json => stdout.write_all(&json)?,
        Format::Csv => stdout.write_all(&csv)?,
        Format::Table => write!(stdout, "{}", study_text(&study))?,
    }
    Ok(())
}

pub(super) fn report(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let full = load_dataset(s)?;
    let audit = experiment::audit_modalities(&full)?;
    let (train, test) = load_split(s)?;
    let study = experiment::frontier_study(&train, &test, &study_options(s))?;
    let (ffr_beta, ffr_model) = match s.beta {
        Some(b) => (b, crate::fusion::fit_ffr(&train, b, s.lambda)?),
        None => (study.selection.chosen_beta, study.chosen_model().clone()),
    };
    let mut methods = study
        .baselines
        .all()
        .iter()
        .map(|b| experiment::audit_model(b.model.method.label(), &b.model, &test))
        .collect::<Result<Vec<_>>>()?;
    methods.push(experiment::audit_model(
        &format!("{} (beta={ffr_beta})", Method::Ffr.label()),
        &ffr_model,
        &test,
    )?);
    let value = json!({
        "audit": audit,
        "methods": AuditReport { models: methods.clone() },
        "frontier": study_json(s, &study),
    });
    let json = to_json(&value);
    let csv = frontier_csv(&study)?;
    write_outputs(
        &s.out,
        vec![(s.out.join("report.json"), json.clone()), (s.out.join("frontier.csv"), csv)],
    )?;
    match s.format {
        Format::Json => stdout.write_all(&json)?,
        Format::Csv => {
            stdout.write_all(&audit_csv(&audit.models)?)?;
            stdout.write_all(&audit_csv(&methods)?)?;
        }
        Format::Table => {
            write!(stdout, "{}", audit_table("Accuracy and bias per modality (full corpus)", &audit.models))?;
            writeln!(stdout)?;
            write!(stdout, "{}", audit_table("Fusion methods (test split)", &methods))?;
            writeln!(stdout)?;
            write!(stdout, "{}", study_text(&study))?;
        }
    }
    Ok(())
}
