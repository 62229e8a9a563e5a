//! Black-box score sources.
//!
//! A provider is either a replay of recorded scores (for users who collected
//! real API outputs) or a seeded synthetic scorer. The synthetic scorer adds
//! accuracy noise shared by the two gender variants of an instance, a
//! symmetric gender shift of `bias / 2`, and optional per-variant jitter:
//!
//! ```text
//! male   = clamp(truth - bias/2 + e_pair + e_m, -1, 1)
//! female = clamp(truth + bias/2 + e_pair + e_f, -1, 1)
//! ```
//!
//! with `e_pair ~ N(0, noise_sigma^2)` and `e_m, e_f ~ N(0, gender_noise_sigma^2)`.
//! Every draw comes from its own stream keyed by `(seed, template_id,
//! pair_index, component)`, so scores do not depend on iteration order.

use std::collections::HashMap;
use std::fs::File;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, instance_id, CorpusEntry, GenderedPair, TemplateRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderKind {
    Recorded {
        path: PathBuf,
    },
    Synthetic {
        #[serde(default)]
        bias: f64,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        gender_noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ProviderKind,
}

impl ProviderSpec {
    pub fn synthetic(name: impl Into<String>, bias: f64, noise_sigma: f64, seed: u64) -> Self {
        Self {
            name: name.into(),
            kind: ProviderKind::Synthetic {
                bias,
                noise_sigma,
                gender_noise_sigma: 0.0,
                seed,
            },
        }
    }

    pub fn with_gender_noise(mut self, sigma: f64) -> Self {
        if let ProviderKind::Synthetic { gender_noise_sigma, .. } = &mut self.kind {
            *gender_noise_sigma = sigma;
        }
        self
    }

    pub fn recorded(name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            kind: ProviderKind::Recorded { path: path.into() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidParameter("provider without a name".into()));
        }
        if let ProviderKind::Synthetic {
            bias,
            noise_sigma,
            gender_noise_sigma,
            ..
        } = self.kind
        {
            if !bias.is_finite() {
                return Err(Error::InvalidParameter(format!("{}: non-finite bias", self.name)));
            }
            for (what, sigma) in [("noise_sigma", noise_sigma), ("gender_noise_sigma", gender_noise_sigma)] {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{}: {what} must be finite and >= 0, got {sigma}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Source {
    Recorded(HashMap<String, (f64, f64)>),
    Synthetic {
        bias: f64,
        noise_sigma: f64,
        gender_noise_sigma: f64,
        seed: u64,
    },
}

/// A ready-to-score provider. Recorded providers hold their scores in memory.
#[derive(Debug, Clone)]
pub struct Provider {
    name: String,
    source: Source,
}

impl Provider {
    /// Opens a provider, loading recorded scores from disk when needed.
    pub fn open(spec: &ProviderSpec) -> Result<Self> {
        match &spec.kind {
            ProviderKind::Recorded { path } => {
                let file = File::open(path)
                    .map_err(|e| Error::from(e).context(format!("provider {}: {}", spec.name, path.display())))?;
                Self::recorded_from_reader(&spec.name, file, &path.display().to_string())
            }
            _ => Self::from_spec(spec),
        }
    }

    /// Builds a synthetic provider. Recorded specs must go through [`Provider::open`].
    pub fn from_spec(spec: &ProviderSpec) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            ProviderKind::Synthetic {
                bias,
                noise_sigma,
                gender_noise_sigma,
                seed,
            } => Ok(Self {
                name: spec.name.clone(),
                source: Source::Synthetic {
                    bias,
                    noise_sigma,
                    gender_noise_sigma,
                    seed,
                },
            }),
            ProviderKind::Recorded { .. } => Err(Error::InvalidParameter(format!(
                "recorded provider {} needs its score file opened",
                spec.name
            ))),
        }
    }

    /// Replays the `score.<name>` column of a corpus-format CSV.
    pub fn recorded_from_reader<R: std::io::Read>(name: &str, input: R, source: &str) -> Result<Self> {
        let table = corpus::read_corpus(input, source)?;
        let col = table
            .modality_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema {
                path: source.to_string(),
                message: format!("no score.{name} column"),
            })?;
        let scores = table
            .pairs
            .into_iter()
            .map(|p| (p.template_id, (p.male_scores[col], p.female_scores[col])))
            .collect();
        Ok(Self {
            name: name.to_string(),
            source: Source::Recorded(scores),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn score_pair(&self, template: &TemplateRecord, pair_index: usize) -> Result<(f64, f64)> {
        self.score_instance(&template.template_id, template.truth, pair_index)
    }

    /// Scores both gender variants of one template instance.
    ///
    /// Recorded scores are keyed by the instance id `template_id#pair_index`,
    /// falling back to the bare `template_id` for files recorded per template.
    pub fn score_instance(&self, template_id: &str, truth: f64, pair_index: usize) -> Result<(f64, f64)> {
        match &self.source {
            Source::Recorded(scores) => scores
                .get(&instance_id(template_id, pair_index))
                .or_else(|| scores.get(template_id))
                .copied()
                .ok_or_else(|| Error::MissingRecordedScore {
                    provider: self.name.clone(),
                    template_id: template_id.to_string(),
                    pair_index,
                    gender: 'm',
                }),
            &Source::Synthetic {
                bias,
                noise_sigma,
                gender_noise_sigma,
                seed,
            } => {
                let draw = |component: u8, sigma: f64| -> f64 {
                    if sigma == 0.0 {
                        return 0.0;
                    }
                    let key = stream_key(seed, template_id, pair_index, component);
                    let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(key));
                    sigma * z
                };
                let shared = draw(b'p', noise_sigma);
                let male = truth - bias / 2.0 + shared + draw(b'm', gender_noise_sigma);
                let female = truth + bias / 2.0 + shared + draw(b'f', gender_noise_sigma);
                Ok((male.clamp(-1.0, 1.0), female.clamp(-1.0, 1.0)))
            }
        }
    }
}

/// FNV-1a over the stream coordinates; stable across platforms and releases.
fn stream_key(seed: u64, template_id: &str, pair_index: usize, component: u8) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    feed(&seed.to_le_bytes());
    feed(template_id.as_bytes());
    feed(&[0xff]);
    feed(&(pair_index as u64).to_le_bytes());
    feed(&[component]);
    h
}

/// Scores every corpus entry with every provider, in provider order.
pub fn score_corpus(providers: &[Provider], entries: &[CorpusEntry]) -> Result<Vec<GenderedPair>> {
    if providers.is_empty() {
        return Err(Error::EmptyGroup("providers"));
    }
    entries
        .iter()
        .map(|entry| {
            let mut male = Vec::with_capacity(providers.len());
            let mut female = Vec::with_capacity(providers.len());
            for p in providers {
                let (m, f) = p
                    .score_instance(&entry.template_id, entry.truth, entry.term_index)
                    .map_err(|e| e.context(format!("scoring {}", entry.instance_id())))?;
                male.push(m);
                female.push(f);
            }
            GenderedPair::new(
                entry.instance_id(),
                entry.male_text.clone(),
                entry.female_text.clone(),
                male,
                female,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_corpus, IdentityTermPair};
    use proptest::prelude::*;

    const TABLE_ONE: &str = "\
template_id,gender,text,y,score.k1,score.k2,score.k3
hurts,m,man hurts woman in ..,-0.7,-0.9,-0.5,0.6
hurts,f,woman hurts man in ..,-0.7,-0.7,-0.8,-0.9
";

    fn recorded(name: &str) -> Provider {
        Provider::recorded_from_reader(name, TABLE_ONE.as_bytes(), "table1").unwrap()
    }

    fn hurts() -> TemplateRecord {
        TemplateRecord::new("hurts", "[S1] hurts [S2] in ..", -0.7).unwrap()
    }

    #[test]
    fn recorded_replays_verbatim() {
        assert_eq!(recorded("k1").score_pair(&hurts(), 0).unwrap(), (-0.9, -0.7));
        assert_eq!(recorded("k3").score_pair(&hurts(), 0).unwrap(), (0.6, -0.9));
    }

    #[test]
    fn recorded_missing_score() {
        let other = TemplateRecord::new("other", "[S1] x [S2]", 0.0).unwrap();
        assert!(matches!(
            recorded("k1").score_pair(&other, 0),
            Err(Error::MissingRecordedScore { .. })
        ));
        assert!(Provider::recorded_from_reader("nope", TABLE_ONE.as_bytes(), "t").is_err());
    }

    #[test]
    fn synthetic_noiseless_examples() {
        let t = hurts();
        let echo = Provider::from_spec(&ProviderSpec::synthetic("s", 0.0, 0.0, 1)).unwrap();
        assert_eq!(echo.score_pair(&t, 3).unwrap(), (-0.7, -0.7));

        let zero = TemplateRecord::new("z", "[S1] x [S2]", 0.0).unwrap();
        let biased = Provider::from_spec(&ProviderSpec::synthetic("s", 0.4, 0.0, 1)).unwrap();
        let (m, f) = biased.score_pair(&zero, 0).unwrap();
        assert!((m + 0.2).abs() < 1e-15 && (f - 0.2).abs() < 1e-15);
    }

    #[test]
    fn synthetic_spec_validation() {
        assert!(Provider::from_spec(&ProviderSpec::synthetic("s", 0.0, -0.1, 1)).is_err());
        assert!(Provider::from_spec(&ProviderSpec::synthetic("", 0.0, 0.1, 1)).is_err());
        assert!(Provider::from_spec(&ProviderSpec::recorded("r", "x.csv")).is_err());
    }

    #[test]
    fn score_corpus_orders_providers() {
        let t = vec![hurts()];
        let terms = vec![IdentityTermPair::new("man", "woman").unwrap()];
        let entries = expand_corpus(&t, &terms).unwrap();
        let providers: Vec<_> = ["k1", "k2", "k3"].iter().map(|n| recorded(n)).collect();
        let pairs = score_corpus(&providers, &entries).unwrap();
        assert_eq!(pairs[0].male_scores, [-0.9, -0.5, 0.6]);
        assert_eq!(pairs[0].female_scores, [-0.7, -0.8, -0.9]);
        assert_eq!(pairs[0].male_text, "man hurts woman in ..");

        let echo = Provider::from_spec(&ProviderSpec::synthetic("s", 0.0, 0.0, 0)).unwrap();
        let pairs = score_corpus(&[echo], &entries).unwrap();
        assert_eq!(pairs[0].male_scores, [-0.7]);
        assert_eq!(pairs[0].female_scores, [-0.7]);

        assert!(score_corpus(&[], &entries).is_err());
    }

    #[test]
    fn score_corpus_deterministic_and_order_free() {
        let templates: Vec<_> = (0..20)
            .map(|i| TemplateRecord::new(format!("t{i}"), "[S1] x [S2]", (i as f64 / 20.0) - 0.5).unwrap())
            .collect();
        let terms = crate::corpus::default_terms();
        let entries = expand_corpus(&templates, &terms[..3]).unwrap();
        let spec = ProviderSpec::synthetic("s", 0.3, 0.2, 9).with_gender_noise(0.05);
        let p = [Provider::from_spec(&spec).unwrap()];
        let a = score_corpus(&p, &entries).unwrap();
        let b = score_corpus(&p, &entries).unwrap();
        assert_eq!(a, b);

        let mut reversed = entries.clone();
        reversed.reverse();
        let mut c = score_corpus(&p, &reversed).unwrap();
        c.reverse();
        assert_eq!(a, c);
    }

    #[test]
    fn provider_spec_toml() {
        let src = r#"
            name = "alpha"
            kind = "synthetic"
            bias = 0.3
            noise_sigma = 0.25
            seed = 7
        "#;
        let spec: ProviderSpec = toml::from_str(src).unwrap();
        assert_eq!(spec, ProviderSpec::synthetic("alpha", 0.3, 0.25, 7));
        let rec: ProviderSpec = toml::from_str("name = \"g\"\nkind = \"recorded\"\npath = \"g.csv\"").unwrap();
        assert_eq!(rec, ProviderSpec::recorded("g", "g.csv"));
    }

    proptest! {
        #[test]
        fn synthetic_scores_stay_in_range(
            truth in -1.0f64..=1.0,
            bias in -3.0f64..3.0,
            sigma in 0.0f64..2.0,
            jitter in 0.0f64..1.0,
            seed in any::<u64>(),
            idx in 0usize..50,
        ) {
            let p = Provider::from_spec(&ProviderSpec::synthetic("s", bias, sigma, seed).with_gender_noise(jitter)).unwrap();
            let (m, f) = p.score_instance("t", truth, idx).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m) && (-1.0..=1.0).contains(&f));
        }

        #[test]
        fn unbiased_noiseless_gap_is_zero(truth in -1.0f64..=1.0, sigma in 0.0f64..1.0, seed in any::<u64>()) {
            let p = Provider::from_spec(&ProviderSpec::synthetic("s", 0.0, sigma, seed)).unwrap();
            let (m, f) = p.score_instance("t", truth, 0).unwrap();
            prop_assert_eq!(m, f);
        }
    }
}
