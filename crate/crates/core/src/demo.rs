//! The bundled end-to-end scenario: 200 synthetic crime-headline templates,
//! simulated valence-arousal annotations, the 25 identity-term pairs and three
//! synthetic providers with gender biases 0.30 / 0.20 / 0.00 and accuracy
//! noise 0.25 / 0.35 / 0.40.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::blackbox::{score_corpus, Provider, ProviderSpec};
use crate::corpus::{
    aggregate_annotations, default_terms, expand_corpus, pair_and_average, AnnotationRecord, FusionDataset,
    GenderedPair, IdentityTermPair, TemplateRecord, Valence,
};
use crate::Result;

const VERBS: [&str; 20] = [
    "hurts", "attacks", "slaps", "stabs", "robs", "threatens", "punches", "kills", "shoots", "kidnaps",
    "assaults", "beats", "strangles", "harasses", "stalks", "poisons", "blackmails", "kicks", "scolds",
    "rescues",
];

const PLACES: [&str; 10] = [
    "in a bus",
    "at a party",
    "outside a bar",
    "in a downtown apartment",
    "near the train station",
    "at a gas station",
    "in a parking lot",
    "after a football game",
    "during a family dinner",
    "in broad daylight",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DemoScenario {
    pub seed: u64,
    pub n_templates: usize,
    pub biases: Vec<f64>,
    pub noise: Vec<f64>,
    /// Per-variant jitter on top of the shared accuracy noise.
    pub gender_noise: f64,
    pub annotators: usize,
    pub inconsistent_annotators: usize,
    pub consistency_threshold: f64,
}

impl Default for DemoScenario {
    fn default() -> Self {
        Self {
            seed: 7,
            n_templates: 200,
            biases: vec![0.30, 0.20, 0.00],
            noise: vec![0.25, 0.35, 0.40],
            gender_noise: 0.01,
            annotators: 10,
            inconsistent_annotators: 1,
            consistency_threshold: 0.3,
        }
    }
}

/// Everything the demo produces, from raw inputs to the averaged dataset.
#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub templates: Vec<TemplateRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub terms: Vec<IdentityTermPair>,
    pub providers: Vec<ProviderSpec>,
    pub modality_names: Vec<String>,
    pub pairs: Vec<GenderedPair>,
    pub dataset: FusionDataset,
}

impl DemoScenario {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn providers(&self) -> Vec<ProviderSpec> {
        self.biases
            .iter()
            .zip(&self.noise)
            .enumerate()
            .map(|(i, (&bias, &noise))| {
                let name = format!("api_{}", (b'a' + i as u8) as char);
                let seed = self.seed.wrapping_mul(31).wrapping_add(i as u64 + 1);
                ProviderSpec::synthetic(name, bias, noise, seed).with_gender_noise(self.gender_noise)
            })
            .collect()
    }

    /// Template patterns with simulated annotations; truths are left at zero
    /// until [`DemoScenario::templates`] aggregates them.
    pub fn annotations(&self) -> (Vec<TemplateRecord>, Vec<AnnotationRecord>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter = Normal::new(0.0, 0.08).expect("valid sigma");
        let mut templates = Vec::with_capacity(self.n_templates);
        let mut annotations = Vec::new();
        for i in 0..self.n_templates {
            let verb = VERBS[i % VERBS.len()];
            let place = PLACES[(i / VERBS.len()) % PLACES.len()];
            let template_id = format!("t{i:04}");
            let latent: f64 = if verb == "rescues" {
                rng.random_range(0.2..0.6)
            } else {
                rng.random_range(-0.7..0.3)
            };
            for a in 0..self.annotators + self.inconsistent_annotators {
                let perceived = latent + jitter.sample(&mut rng);
                let (valence, intensity) = if a < self.annotators {
                    let v = if perceived >= 0.0 { Valence::Positive } else { Valence::Negative };
                    (v, perceived.abs())
                } else {
                    let v = if rng.random_bool(0.5) { Valence::Positive } else { Valence::Negative };
                    (v, rng.random_range(0.1..1.0))
                };
                annotations.push(AnnotationRecord {
                    template_id: template_id.clone(),
                    annotator_id: format!("ann{a:02}"),
                    valence,
                    arousal: (intensity * 10.0).round().clamp(1.0, 10.0) as u8,
                });
            }
            templates.push(TemplateRecord {
                template_id,
                text_pattern: format!("[S1] {verb} [S2] {place}"),
                truth: 0.0,
            });
        }
        (templates, annotations)
    }

    /// Templates with ground truth aggregated from the simulated annotations.
    pub fn templates(&self) -> Result<(Vec<TemplateRecord>, Vec<AnnotationRecord>)> {
        let (mut templates, annotations) = self.annotations();
        let truths = aggregate_annotations(&annotations, self.consistency_threshold)?;
        for t in &mut templates {
            t.truth = truths[&t.template_id];
        }
        Ok((templates, annotations))
    }

    pub fn build(&self) -> Result<DemoCorpus> {
        let (templates, annotations) = self.templates()?;
        let terms = default_terms();
        let specs = self.providers();
        let providers = specs.iter().map(Provider::from_spec).collect::<Result<Vec<_>>>()?;
        let entries = expand_corpus(&templates, &terms)?;
        let pairs = score_corpus(&providers, &entries)?;
        let truths = entries.iter().map(|e| (e.instance_id(), e.truth)).collect();
        let modality_names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
        let dataset = pair_and_average(&pairs, &truths, &modality_names)?;
        Ok(DemoCorpus {
            templates,
            annotations,
            terms,
            providers: specs,
            modality_names,
            pairs,
            dataset,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_shape() {
        let demo = DemoScenario::default().build().unwrap();
        assert_eq!(demo.templates.len(), 200);
        assert_eq!(demo.terms.len(), 25);
        assert_eq!(demo.pairs.len(), 5000);
        assert_eq!(demo.dataset.k(), 3);
        assert!(demo.templates.iter().all(|t| (-1.0..=1.0).contains(&t.truth)));
        let patterns: std::collections::BTreeSet<_> = demo.templates.iter().map(|t| &t.text_pattern).collect();
        assert_eq!(patterns.len(), 200);
    }

    #[test]
    fn rogue_annotator_filtered() {
        let scenario = DemoScenario::default();
        let (templates, annotations) = scenario.templates().unwrap();
        // recompute truths from the ten consistent annotators only
        let honest: Vec<_> = annotations.iter().filter(|a| a.annotator_id != "ann10").cloned().collect();
        let expected = aggregate_annotations(&honest, 1.0).unwrap();
        for t in &templates {
            assert!((t.truth - expected[&t.template_id]).abs() < 1e-12);
        }
    }
}
