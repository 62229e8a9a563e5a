//! Gendered two-actor templates and the per-template fusion dataset.
//!
//! A template such as `"[S1] hurts [S2] in a bus"` is realized twice per
//! identity-term pair: once with the male term as perpetrator and once with
//! the female term. Every realization pair is scored by each modality; the
//! two scores are averaged into one row of `X` and their absolute difference
//! becomes the matching row of the bias matrix `Delta`.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{
    read_annotations, read_corpus, read_templates, read_terms, write_annotations, write_corpus,
    write_templates, write_terms, CorpusTable,
};

pub const SLOT_PERPETRATOR: &str = "[S1]";
pub const SLOT_VICTIM: &str = "[S2]";

/// Bundled list of 25 binary identity-term pairs.
pub const DEFAULT_TERMS_CSV: &str = include_str!("../../data/identity_terms.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template_id: String,
    pub text_pattern: String,
    pub truth: f64,
}

impl TemplateRecord {
    pub fn new(
        template_id: impl Into<String>,
        text_pattern: impl Into<String>,
        truth: f64,
    ) -> Result<Self> {
        let record = Self {
            template_id: template_id.into(),
            text_pattern: text_pattern.into(),
            truth,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        self.slot_offsets()?;
        if !(-1.0..=1.0).contains(&self.truth) {
            return Err(self.malformed(format!("truth {} outside [-1, 1]", self.truth)));
        }
        Ok(())
    }

    fn malformed(&self, reason: String) -> Error {
        Error::MalformedTemplate {
            template_id: self.template_id.clone(),
            reason,
        }
    }

    fn slot_offsets(&self) -> Result<(usize, usize)> {
        let pattern = &self.text_pattern;
        let find_once = |slot: &str| -> Result<usize> {
            let hits: Vec<usize> = pattern.match_indices(slot).map(|(i, _)| i).collect();
            match hits.as_slice() {
                [i] => Ok(*i),
                _ => Err(self.malformed(format!(
                    "expected exactly one {slot} slot, found {}",
                    hits.len()
                ))),
            }
        };
        Ok((find_once(SLOT_PERPETRATOR)?, find_once(SLOT_VICTIM)?))
    }

    /// Fills the two slots with the given terms.
    fn fill(&self, perpetrator: &str, victim: &str) -> Result<String> {
        let (s1, s2) = self.slot_offsets()?;
        let p = &self.text_pattern;
        let slot_len = SLOT_PERPETRATOR.len();
        let mut out = String::with_capacity(p.len() + perpetrator.len() + victim.len());
        let (first, first_term, second, second_term) = if s1 < s2 {
            (s1, perpetrator, s2, victim)
        } else {
            (s2, victim, s1, perpetrator)
        };
        out.push_str(&p[..first]);
        out.push_str(first_term);
        out.push_str(&p[first + slot_len..second]);
        out.push_str(second_term);
        out.push_str(&p[second + SLOT_VICTIM.len()..]);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IdentityTermPair {
    pub male_term: String,
    pub female_term: String,
}

impl IdentityTermPair {
    pub fn new(male_term: impl Into<String>, female_term: impl Into<String>) -> Result<Self> {
        let pair = Self {
            male_term: male_term.into(),
            female_term: female_term.into(),
        };
        for term in [&pair.male_term, &pair.female_term] {
            if term.trim().is_empty() {
                return Err(Error::InvalidParameter("empty identity term".into()));
            }
            if term.contains(SLOT_PERPETRATOR) || term.contains(SLOT_VICTIM) {
                return Err(Error::InvalidParameter(format!(
                    "identity term {term:?} contains a slot marker"
                )));
            }
        }
        Ok(pair)
    }

    pub fn swapped(&self) -> Self {
        Self {
            male_term: self.female_term.clone(),
            female_term: self.male_term.clone(),
        }
    }
}

/// Parses the bundled identity-term list.
pub fn default_terms() -> Vec<IdentityTermPair> {
    read_terms(DEFAULT_TERMS_CSV.as_bytes(), "identity_terms.csv")
        .expect("bundled identity terms are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Positive,
    Negative,
}

impl Valence {
    pub fn sign(self) -> f64 {
        match self {
            Valence::Positive => 1.0,
            Valence::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub template_id: String,
    pub annotator_id: String,
    pub valence: Valence,
    pub arousal: u8,
}

impl AnnotationRecord {
    /// Valence-arousal mapped onto [-1, 1]: `sign(valence) * arousal / 10`.
    pub fn score(&self) -> f64 {
        self.valence.sign() * f64::from(self.arousal) / 10.0
    }
}

/// The two gender-swapped realizations of one template instance, with one
/// score per modality for each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderedPair {
    pub template_id: String,
    pub male_text: String,
    pub female_text: String,
    pub male_scores: Vec<f64>,
    pub female_scores: Vec<f64>,
}

impl GenderedPair {
    pub fn new(
        template_id: impl Into<String>,
        male_text: impl Into<String>,
        female_text: impl Into<String>,
        male_scores: Vec<f64>,
        female_scores: Vec<f64>,
    ) -> Result<Self> {
        let pair = Self {
            template_id: template_id.into(),
            male_text: male_text.into(),
            female_text: female_text.into(),
            male_scores,
            female_scores,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn k(&self) -> usize {
        self.male_scores.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.male_scores.is_empty() {
            return Err(Error::EmptyGroup("pair scores"));
        }
        if self.male_scores.len() != self.female_scores.len() {
            return Err(Error::LengthMismatch {
                left: self.male_scores.len(),
                right: self.female_scores.len(),
            });
        }
        for &s in self.male_scores.iter().chain(&self.female_scores) {
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::InvalidParameter(format!(
                    "score {s} for {:?} outside [-1, 1]",
                    self.template_id
                )));
            }
        }
        Ok(())
    }
}

/// One expanded template instance: a template realized with one term pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub template_id: String,
    pub term_index: usize,
    pub male_text: String,
    pub female_text: String,
    pub truth: f64,
}

impl CorpusEntry {
    /// Identifier of the instance, unique across the expanded corpus.
    pub fn instance_id(&self) -> String {
        instance_id(&self.template_id, self.term_index)
    }
}

pub fn instance_id(template_id: &str, term_index: usize) -> String {
    format!("{template_id}#{term_index}")
}

/// Realizes a template with the male term as perpetrator (`[S1]`) and,
/// swapped, with the female term as perpetrator.
pub fn swap_gender(template: &TemplateRecord, pair: &IdentityTermPair) -> Result<(String, String)> {
    let male = template.fill(&pair.male_term, &pair.female_term)?;
    let female = template.fill(&pair.female_term, &pair.male_term)?;
    Ok((male, female))
}

/// Every template crossed with every term pair, templates outermost.
pub fn expand_corpus(
    templates: &[TemplateRecord],
    terms: &[IdentityTermPair],
) -> Result<Vec<CorpusEntry>> {
    if templates.is_empty() {
        return Err(Error::EmptyGroup("templates"));
    }
    if terms.is_empty() {
        return Err(Error::EmptyGroup("identity terms"));
    }
    let mut seen = BTreeSet::new();
    for t in templates {
        if !seen.insert(t.template_id.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate template id {:?}",
                t.template_id
            )));
        }
    }
    let mut entries = Vec::with_capacity(templates.len() * terms.len());
    for template in templates {
        template.validate()?;
        for (term_index, pair) in terms.iter().enumerate() {
            let (male_text, female_text) = swap_gender(template, pair)?;
            entries.push(CorpusEntry {
                template_id: template.template_id.clone(),
                term_index,
                male_text,
                female_text,
                truth: template.truth,
            });
        }
    }
    Ok(entries)
}

/// Aggregates valence-arousal annotations into one truth score per template.
///
/// An annotator is dropped when their valence disagrees with the per-template
/// majority valence on more than `consistency_threshold` of the templates they
/// labeled. Majorities are taken over all annotators; a tied template has no
/// majority and counts as agreement. The truth is the mean score of the
/// surviving annotations.
pub fn aggregate_annotations(
    records: &[AnnotationRecord],
    consistency_threshold: f64,
) -> Result<BTreeMap<String, f64>> {
    if !(0.0..=1.0).contains(&consistency_threshold) {
        return Err(Error::InvalidParameter(format!(
            "consistency threshold {consistency_threshold} outside [0, 1]"
        )));
    }
    for r in records {
        if !(1..=10).contains(&r.arousal) {
            return Err(Error::InvalidParameter(format!(
                "arousal {} outside 1..=10 ({:?}/{:?})",
                r.arousal, r.template_id, r.annotator_id
            )));
        }
    }

    let mut votes: HashMap<&str, i64> = HashMap::new();
    for r in records {
        *votes.entry(r.template_id.as_str()).or_default() += r.valence.sign() as i64;
    }
    let majority = |template_id: &str| -> Option<Valence> {
        match votes[template_id].signum() {
            1 => Some(Valence::Positive),
            -1 => Some(Valence::Negative),
            _ => None,
        }
    };

    // (labeled, disagreements) per annotator
    let mut tally: HashMap<&str, (usize, usize)> = HashMap::new();
    for r in records {
        let entry = tally.entry(r.annotator_id.as_str()).or_default();
        entry.0 += 1;
        if majority(&r.template_id).is_some_and(|m| m != r.valence) {
            entry.1 += 1;
        }
    }
    let consistent = |annotator: &str| {
        let (labeled, disagreements) = tally[annotator];
        (disagreements as f64) / (labeled as f64) <= consistency_threshold
    };

    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        sums.entry(r.template_id.as_str()).or_insert((0.0, 0));
    }
    for r in records.iter().filter(|r| consistent(&r.annotator_id)) {
        let e = sums.get_mut(r.template_id.as_str()).expect("template registered");
        e.0 += r.score();
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(id, (sum, n))| {
            if n == 0 {
                Err(Error::EmptyAfterFilter(id.to_string()))
            } else {
                Ok((id.to_string(), sum / n as f64))
            }
        })
        .collect()
}

/// Aligned per-template matrices for fitting and evaluation.
///
/// `male` and `female` keep the raw per-gender scores so that fused models can
/// be evaluated for their realized gender gap; `x` and `delta` are derived
/// from them.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionDataset {
    pub template_ids: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub delta: DMatrix<f64>,
    pub male: DMatrix<f64>,
    pub female: DMatrix<f64>,
    pub modality_names: Vec<String>,
}

impl FusionDataset {
    /// Builds the dataset from raw per-gender score matrices.
    pub fn from_scores(
        template_ids: Vec<String>,
        male: DMatrix<f64>,
        female: DMatrix<f64>,
        y: DVector<f64>,
        modality_names: Vec<String>,
    ) -> Result<Self> {
        let t = template_ids.len();
        if male.nrows() != t || female.nrows() != t || y.len() != t {
            return Err(Error::LengthMismatch {
                left: t,
                right: male.nrows().min(female.nrows()).min(y.len()),
            });
        }
        if male.ncols() != female.ncols() || male.ncols() != modality_names.len() {
            return Err(Error::LengthMismatch {
                left: male.ncols(),
                right: modality_names.len(),
            });
        }
        if male.iter().chain(female.iter()).chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        let x = (&male + &female) / 2.0;
        let delta = male.zip_map(&female, |m, f| (m - f).abs());
        Ok(Self {
            template_ids,
            x,
            y,
            delta,
            male,
            female,
            modality_names,
        })
    }

    pub fn len(&self) -> usize {
        self.template_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.template_ids.is_empty()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            template_ids: rows.iter().map(|&i| self.template_ids[i].clone()).collect(),
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            delta: self.delta.select_rows(rows),
            male: self.male.select_rows(rows),
            female: self.female.select_rows(rows),
            modality_names: self.modality_names.clone(),
        }
    }

    /// Appends a constant column to the scores and a zero column to `delta`,
    /// so that a fitted weight on it acts as an intercept.
    pub fn with_intercept(&self) -> Self {
        let k = self.k();
        let add_ones = |m: &DMatrix<f64>| m.clone().insert_column(k, 1.0);
        Self {
            template_ids: self.template_ids.clone(),
            x: add_ones(&self.x),
            y: self.y.clone(),
            delta: self.delta.clone().insert_column(k, 0.0),
            male: add_ones(&self.male),
            female: add_ones(&self.female),
            modality_names: self
                .modality_names
                .iter()
                .cloned()
                .chain(std::iter::once("intercept".to_string()))
                .collect(),
        }
    }

    /// Column `j` of the male score matrix.
    pub fn male_column(&self, j: usize) -> Vec<f64> {
        self.male.column(j).iter().copied().collect()
    }

    pub fn female_column(&self, j: usize) -> Vec<f64> {
        self.female.column(j).iter().copied().collect()
    }
}

/// Averages each gendered pair into one row and records the per-modality
/// absolute gender gap in `delta`.
pub fn pair_and_average(
    pairs: &[GenderedPair],
    truths: &BTreeMap<String, f64>,
    modality_names: &[String],
) -> Result<FusionDataset> {
    let first = pairs.first().ok_or(Error::EmptyGroup("pairs"))?;
    let k = first.k();
    if modality_names.len() != k {
        return Err(Error::LengthMismatch {
            left: modality_names.len(),
            right: k,
        });
    }
    let t = pairs.len();
    let mut male = DMatrix::zeros(t, k);
    let mut female = DMatrix::zeros(t, k);
    let mut y = DVector::zeros(t);
    let mut ids = Vec::with_capacity(t);
    for (i, pair) in pairs.iter().enumerate() {
        pair.validate()?;
        if pair.k() != k {
            return Err(Error::InconsistentK {
                expected: k,
                found: pair.k(),
                row: i,
            });
        }
        let truth = *truths
            .get(&pair.template_id)
            .ok_or_else(|| Error::MissingTruth(pair.template_id.clone()))?;
        if !(-1.0..=1.0).contains(&truth) {
            return Err(Error::InvalidParameter(format!(
                "truth {truth} for {:?} outside [-1, 1]",
                pair.template_id
            )));
        }
        for j in 0..k {
            male[(i, j)] = pair.male_scores[j];
            female[(i, j)] = pair.female_scores[j];
        }
        y[i] = truth;
        ids.push(pair.template_id.clone());
    }
    FusionDataset::from_scores(ids, male, female, y, modality_names.to_vec())
}

/// Seeded template-level split; `round(train_fraction * T)` rows go to train.
/// Both sides keep the original row order.
pub fn split(
    dataset: &FusionDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(FusionDataset, FusionDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let t = dataset.len();
    let n_train = (train_fraction * t as f64).round() as usize;
    if n_train == 0 || n_train >= t {
        return Err(Error::DatasetTooSmall(format!(
            "{t} rows cannot be split {train_fraction} / {}",
            1.0 - train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.select_rows(train), dataset.select_rows(test)))
}
