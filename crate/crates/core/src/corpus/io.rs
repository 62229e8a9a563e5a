//! CSV readers and writers for templates, identity terms, annotations and
//! scored corpora.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use csv::StringRecord;

use super::{AnnotationRecord, GenderedPair, IdentityTermPair, TemplateRecord, Valence};
use crate::{Error, Result};

const SCORE_PREFIX: &str = "score.";

fn schema(source: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: source.to_string(),
        message: message.into(),
    }
}

struct Columns<'a> {
    source: &'a str,
    headers: StringRecord,
}

impl<'a> Columns<'a> {
    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| schema(self.source, format!("missing required column {name:?}")))
    }

    fn field<'r>(&self, record: &'r StringRecord, idx: usize, row: usize) -> Result<&'r str> {
        record
            .get(idx)
            .map(str::trim)
            .ok_or_else(|| schema(self.source, format!("row {row}: too few fields")))
    }

    fn number(&self, record: &StringRecord, idx: usize, row: usize) -> Result<f64> {
        let raw = self.field(record, idx, row)?;
        let value: f64 = raw.parse().map_err(|_| {
            schema(
                self.source,
                format!("row {row}: column {:?} is not a number: {raw:?}", &self.headers[idx]),
            )
        })?;
        if !value.is_finite() {
            return Err(schema(self.source, format!("row {row}: non-finite value {raw:?}")));
        }
        Ok(value)
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

/// Reads a `template_id,text_pattern,truth` seed file.
pub fn read_templates<R: Read>(input: R, source: &str) -> Result<Vec<TemplateRecord>> {
    let mut rdr = reader(input);
    let cols = Columns { source, headers: rdr.headers()?.clone() };
    let (id, pattern, truth) = (cols.index("template_id")?, cols.index("text_pattern")?, cols.index("truth")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let template = TemplateRecord {
            template_id: cols.field(&rec, id, row)?.to_string(),
            text_pattern: cols.field(&rec, pattern, row)?.to_string(),
            truth: cols.number(&rec, truth, row)?,
        };
        template
            .validate()
            .map_err(|e| schema(source, format!("row {row}: {e}")))?;
        out.push(template);
    }
    if out.is_empty() {
        return Err(schema(source, "no templates"));
    }
    Ok(out)
}

/// Reads a `male_term,female_term` file.
pub fn read_terms<R: Read>(input: R, source: &str) -> Result<Vec<IdentityTermPair>> {
    let mut rdr = reader(input);
    let cols = Columns { source, headers: rdr.headers()?.clone() };
    let (m, f) = (cols.index("male_term")?, cols.index("female_term")?);
    let mut out: Vec<IdentityTermPair> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let pair = IdentityTermPair::new(cols.field(&rec, m, row)?, cols.field(&rec, f, row)?)
            .map_err(|e| schema(source, format!("row {row}: {e}")))?;
        if out.contains(&pair) {
            return Err(schema(source, format!("row {row}: duplicate term pair")));
        }
        out.push(pair);
    }
    if out.is_empty() {
        return Err(schema(source, "no identity terms"));
    }
    Ok(out)
}

/// Reads a `template_id,annotator_id,valence,arousal` file.
pub fn read_annotations<R: Read>(input: R, source: &str) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = reader(input);
    let cols = Columns { source, headers: rdr.headers()?.clone() };
    let idx = [
        cols.index("template_id")?,
        cols.index("annotator_id")?,
        cols.index("valence")?,
        cols.index("arousal")?,
    ];
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let valence = match cols.field(&rec, idx[2], row)?.to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Valence::Positive,
            "negative" | "neg" | "-" => Valence::Negative,
            other => return Err(schema(source, format!("row {row}: unknown valence {other:?}"))),
        };
        let raw = cols.field(&rec, idx[3], row)?;
        let arousal: u8 = raw
            .parse()
            .ok()
            .filter(|a| (1..=10).contains(a))
            .ok_or_else(|| schema(source, format!("row {row}: arousal {raw:?} not in 1..=10")))?;
        out.push(AnnotationRecord {
            template_id: cols.field(&rec, idx[0], row)?.to_string(),
            annotator_id: cols.field(&rec, idx[1], row)?.to_string(),
            valence,
            arousal,
        });
    }
    Ok(out)
}

pub fn write_templates<W: Write>(output: W, templates: &[TemplateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["template_id", "text_pattern", "truth"])?;
    for t in templates {
        w.write_record([t.template_id.as_str(), &t.text_pattern, &t.truth.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_terms<W: Write>(output: W, terms: &[IdentityTermPair]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["male_term", "female_term"])?;
    for t in terms {
        w.write_record([&t.male_term, &t.female_term])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_annotations<W: Write>(output: W, records: &[AnnotationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["template_id", "annotator_id", "valence", "arousal"])?;
    for r in records {
        let valence = match r.valence {
            Valence::Positive => "positive",
            Valence::Negative => "negative",
        };
        w.write_record([r.template_id.as_str(), &r.annotator_id, valence, &r.arousal.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// A scored corpus as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTable {
    pub modality_names: Vec<String>,
    pub pairs: Vec<GenderedPair>,
    pub truths: BTreeMap<String, f64>,
}

/// Writes one row per gendered sentence: the male variant, then the female one.
pub fn write_corpus<W: Write>(
    output: W,
    modality_names: &[String],
    pairs: &[GenderedPair],
    truths: &BTreeMap<String, f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    let mut header = vec!["template_id".to_string(), "gender".into(), "text".into(), "y".into()];
    header.extend(modality_names.iter().map(|n| format!("{SCORE_PREFIX}{n}")));
    w.write_record(&header)?;
    for pair in pairs {
        if pair.k() != modality_names.len() {
            return Err(Error::LengthMismatch { left: pair.k(), right: modality_names.len() });
        }
        let y = truths
            .get(&pair.template_id)
            .ok_or_else(|| Error::MissingTruth(pair.template_id.clone()))?
            .to_string();
        for (gender, text, scores) in [
            ("m", &pair.male_text, &pair.male_scores),
            ("f", &pair.female_text, &pair.female_scores),
        ] {
            let mut row = vec![pair.template_id.clone(), gender.into(), text.clone(), y.clone()];
            row.extend(scores.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a scored corpus. Each `template_id` must appear exactly once per
/// gender with the same `y`; scores outside [-1, 1] are rejected.
pub fn read_corpus<R: Read>(input: R, source: &str) -> Result<CorpusTable> {
    let mut rdr = reader(input);
    let cols = Columns { source, headers: rdr.headers()?.clone() };
    let (id, gender, text, y) = (
        cols.index("template_id")?,
        cols.index("gender")?,
        cols.index("text")?,
        cols.index("y")?,
    );
    let score_cols: Vec<(usize, String)> = cols
        .headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.trim().strip_prefix(SCORE_PREFIX).map(|n| (i, n.to_string())))
        .collect();
    if score_cols.is_empty() {
        return Err(schema(source, "no score.<modality> columns"));
    }

    struct Half {
        text: String,
        y: f64,
        scores: Vec<f64>,
    }
    // insertion order of template ids is preserved through `order`
    let mut order: Vec<String> = Vec::new();
    let mut halves: BTreeMap<String, [Option<Half>; 2]> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let tid = cols.field(&rec, id, row)?.to_string();
        let slot = match cols.field(&rec, gender, row)? {
            "m" | "M" => 0,
            "f" | "F" => 1,
            g => return Err(schema(source, format!("row {row}: gender {g:?} is not m or f"))),
        };
        let yv = cols.number(&rec, y, row)?;
        let mut scores = Vec::with_capacity(score_cols.len());
        for (c, name) in &score_cols {
            let s = cols.number(&rec, *c, row)?;
            if !(-1.0..=1.0).contains(&s) {
                return Err(schema(
                    source,
                    format!("row {row}: score.{name} = {s} outside [-1, 1]"),
                ));
            }
            scores.push(s);
        }
        let entry = halves.entry(tid.clone()).or_insert_with(|| {
            order.push(tid.clone());
            [None, None]
        });
        if entry[slot].is_some() {
            return Err(schema(source, format!("row {row}: duplicate {tid:?} gender row")));
        }
        entry[slot] = Some(Half {
            text: cols.field(&rec, text, row)?.to_string(),
            y: yv,
            scores,
        });
    }

    let mut pairs = Vec::with_capacity(order.len());
    let mut truths = BTreeMap::new();
    for tid in order {
        let [m, f] = halves.remove(&tid).expect("registered");
        let (Some(m), Some(f)) = (m, f) else {
            return Err(schema(source, format!("template {tid:?} lacks one gender variant")));
        };
        if m.y != f.y {
            return Err(schema(source, format!("template {tid:?} has different y per gender")));
        }
        if !(-1.0..=1.0).contains(&m.y) {
            return Err(schema(source, format!("template {tid:?}: y {} outside [-1, 1]", m.y)));
        }
        truths.insert(tid.clone(), m.y);
        pairs.push(GenderedPair {
            template_id: tid,
            male_text: m.text,
            female_text: f.text,
            male_scores: m.scores,
            female_scores: f.scores,
        });
    }
    if pairs.is_empty() {
        return Err(schema(source, "empty corpus"));
    }
    Ok(CorpusTable {
        modality_names: score_cols.into_iter().map(|(_, n)| n).collect(),
        pairs,
        truths,
    })
}
