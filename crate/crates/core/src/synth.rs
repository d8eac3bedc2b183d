//! Planted-dictionary corpora with known ground truth.
//!
//! `N` orthonormal directions in `ℝ^m` (Gram–Schmidt on Gaussian draws) act
//! both as the hidden generative dictionary and as the text embeddings of the
//! concept terms. Each image is a sum of `active_per_image` distinct
//! directions with coefficients in `[0.5, 1.5]`, plus isotropic Gaussian
//! noise. Its report lists the active concepts ("Findings: X is present. …")
//! and, for a seeded 20% of images, ends with a negated mention of one
//! inactive concept ("No Z.").

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::store::{
    self, write_embeddings, write_jsonl, ConceptDictionary, ConceptTerm, EmbeddingMatrix, ReportCollection,
};

pub const NEGATED_MENTION_RATE: f64 = 0.2;
pub const COEFFICIENT_RANGE: (f64, f64) = (0.5, 1.5);

/// Abdominal findings used as synthetic term names. No name occurs inside
/// another as a token sequence and none contains a negation cue.
pub const TERM_NAMES: &[&str] = &[
    "ascites",
    "splenomegaly",
    "hepatomegaly",
    "cholelithiasis",
    "cholecystitis",
    "pancreatitis",
    "hydronephrosis",
    "nephrolithiasis",
    "renal cyst",
    "hepatic steatosis",
    "cirrhosis",
    "portal hypertension",
    "varices",
    "lymphadenopathy",
    "appendicitis",
    "diverticulitis",
    "bowel obstruction",
    "pneumoperitoneum",
    "aortic aneurysm",
    "atherosclerosis",
    "adrenal adenoma",
    "hepatic hemangioma",
    "pancreatic mass",
    "biliary dilatation",
    "choledocholithiasis",
    "colitis",
    "inguinal hernia",
    "pleural effusion",
    "atelectasis",
    "splenic infarct",
    "renal atrophy",
    "bladder distension",
    "mesenteric edema",
    "ileus",
    "fecal impaction",
    "intussusception",
    "volvulus",
    "abscess",
    "hematoma",
    "lipoma",
    "gallbladder wall thickening",
    "pancreatic duct dilatation",
    "liver metastasis",
    "peritoneal carcinomatosis",
    "portal vein thrombosis",
    "hepatocellular carcinoma",
    "renal cell carcinoma",
    "splenic lesion",
    "osteophytes",
    "vertebral fracture",
    "anasarca",
    "cholangitis",
    "pyelonephritis",
    "enteritis",
    "hemoperitoneum",
    "nephrocalcinosis",
    "adenomyomatosis",
    "polycystic kidney",
    "hepatic cyst",
    "sigmoid thickening",
    "aortic dissection",
    "mesenteric panniculitis",
    "omental caking",
    "bowel wall edema",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Embedding dimension.
    pub m: usize,
    /// Dictionary size.
    pub n_terms: usize,
    pub n_images: usize,
    pub active_per_image: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_terms == 0 || self.n_images == 0 || self.active_per_image == 0 {
            return Err(Error::Config(
                "m, n_terms, n_images and active_per_image must be positive".into(),
            ));
        }
        if self.active_per_image > self.n_terms {
            return Err(Error::Config(format!(
                "active_per_image ({}) exceeds dictionary size ({})",
                self.active_per_image, self.n_terms
            )));
        }
        if self.n_terms > self.m {
            return Err(Error::Config(format!(
                "an orthonormal dictionary of {} terms needs m ≥ {} (m = {})",
                self.n_terms, self.n_terms, self.m
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise sigma must be ≥ 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub active_terms: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negated_terms: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub image_ids: Vec<String>,
    /// `n_images × m` in full precision.
    pub embeddings: Array2<f64>,
    /// `n_terms × m`, orthonormal rows.
    pub directions: Array2<f64>,
    pub terms: Vec<ConceptTerm>,
    pub reports: ReportCollection,
    pub ground_truth: Vec<GroundTruth>,
    /// `(image row, term index, coefficient)` for every planted component.
    pub coefficients: Vec<Vec<(usize, f64)>>,
}

pub fn term_name(i: usize) -> String {
    TERM_NAMES
        .get(i)
        .map_or_else(|| format!("finding {}", i + 1), |s| s.to_string())
}

fn orthonormal_directions(n: usize, m: usize, rng: &mut SplitMix64) -> Array2<f64> {
    let mut dirs = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        let mut v: Array1<f64> = (0..m).map(|_| rng.gaussian()).collect();
        // Two passes of modified Gram–Schmidt keep orthogonality near 1e-16.
        for _ in 0..2 {
            for p in 0..i {
                let prev = dirs.row(p);
                let proj = prev.dot(&v);
                v.scaled_add(-proj, &prev);
            }
        }
        let norm = v.dot(&v).sqrt();
        dirs.row_mut(i).assign(&(v / norm));
    }
    dirs
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let directions = orthonormal_directions(spec.n_terms, spec.m, &mut rng);
    let terms: Vec<ConceptTerm> = (0..spec.n_terms)
        .map(|i| ConceptTerm::new(format!("c{i:03}"), term_name(i)))
        .collect();
    let width = spec.n_images.saturating_sub(1).to_string().len().max(4);

    let mut image_ids = Vec::with_capacity(spec.n_images);
    let mut embeddings = Array2::zeros((spec.n_images, spec.m));
    let mut reports = ReportCollection::new();
    let mut ground_truth = Vec::with_capacity(spec.n_images);
    let mut coefficients = Vec::with_capacity(spec.n_images);
    let mut pool: Vec<usize> = (0..spec.n_terms).collect();

    for row in 0..spec.n_images {
        let image_id = format!("img_{row:0width$}");
        // Partial Fisher–Yates: the first `active` slots become the draw.
        for i in 0..spec.active_per_image {
            let j = i + rng.below(spec.n_terms - i);
            pool.swap(i, j);
        }
        let mut active: Vec<usize> = pool[..spec.active_per_image].to_vec();
        active.sort_unstable();

        let mut planted = Vec::with_capacity(active.len());
        for &t in &active {
            let c = rng.uniform(COEFFICIENT_RANGE.0, COEFFICIENT_RANGE.1);
            embeddings.row_mut(row).scaled_add(c, &directions.row(t));
            planted.push((t, c));
        }
        if spec.noise_sigma > 0.0 {
            for v in embeddings.row_mut(row).iter_mut() {
                *v += spec.noise_sigma * rng.gaussian();
            }
        }

        let mut report = String::from("Findings:");
        for &t in &active {
            report.push_str(&format!(" {} is present.", capitalize(&terms[t].name)));
        }
        let mut negated = Vec::new();
        let inactive = spec.n_terms - active.len();
        if rng.next_f64() < NEGATED_MENTION_RATE && inactive > 0 {
            let pick = rng.below(inactive);
            let t = (0..spec.n_terms)
                .filter(|i| !active.contains(i))
                .nth(pick)
                .expect("pick < inactive");
            report.push_str(&format!(" No {}.", terms[t].name));
            negated.push(terms[t].id.clone());
        }

        reports.insert(&image_id, report)?;
        ground_truth.push(GroundTruth {
            image_id: image_id.clone(),
            active_terms: active.iter().map(|&t| terms[t].id.clone()).collect(),
            negated_terms: negated,
        });
        coefficients.push(planted);
        image_ids.push(image_id);
    }

    Ok(SynthCorpus {
        spec: spec.clone(),
        image_ids,
        embeddings,
        directions,
        terms,
        reports,
        ground_truth,
        coefficients,
    })
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl SynthCorpus {
    pub fn image_matrix(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::from_array(self.image_ids.clone(), &self.embeddings)
    }

    pub fn dictionary(&self) -> Result<ConceptDictionary> {
        let ids = self.terms.iter().map(|t| t.id.clone()).collect();
        ConceptDictionary::new(self.terms.clone(), EmbeddingMatrix::from_array(ids, &self.directions)?)
    }

    /// Writes `images.embd`, `terms.jsonl`, `terms.embd`, `reports.jsonl`
    /// and `ground_truth.jsonl` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_embeddings(&self.image_matrix()?, dir.join("images.embd"))?;
        let dict = self.dictionary()?;
        store::write_terms(dict.terms(), dir.join("terms.jsonl"))?;
        write_embeddings(dict.embedding(), dir.join("terms.embd"))?;
        store::write_reports(&self.reports, dir.join("reports.jsonl"))?;
        write_jsonl(dir.join("ground_truth.jsonl"), &self.ground_truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::{tokenize, verdict, MockJudge, Verdict, NEGATION_CUES};

    fn spec(sigma: f64) -> SynthSpec {
        SynthSpec {
            m: 64,
            n_terms: 32,
            n_images: 500,
            active_per_image: 3,
            noise_sigma: sigma,
            seed: 1,
        }
    }

    #[test]
    fn noiseless_images_lie_in_their_planted_span() {
        let c = generate(&spec(0.0)).unwrap();
        for (row, gt) in c.ground_truth.iter().enumerate() {
            assert_eq!(gt.active_terms.len(), 3);
            let f = c.embeddings.row(row);
            let mut residual = f.to_owned();
            for (t, coef) in &c.coefficients[row] {
                residual.scaled_add(-coef, &c.directions.row(*t));
            }
            assert!(residual.iter().all(|v| v.abs() < 1e-12));
            for t in 0..32 {
                if !c.coefficients[row].iter().any(|(a, _)| *a == t) {
                    assert!(c.directions.row(t).dot(&f).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn directions_are_orthonormal() {
        let c = generate(&spec(0.01)).unwrap();
        let gram = c.directions.dot(&c.directions.t());
        for i in 0..32 {
            for j in 0..32 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&spec(0.01)).unwrap();
        let b = generate(&spec(0.01)).unwrap();
        assert_eq!(
            a.image_matrix().unwrap().to_bytes(),
            b.image_matrix().unwrap().to_bytes()
        );
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.ground_truth, b.ground_truth);
        let c = generate(&SynthSpec { seed: 2, ..spec(0.01) }).unwrap();
        assert_ne!(a.embeddings, c.embeddings);
    }

    #[test]
    fn reports_agree_with_ground_truth_under_mock_judge() {
        let c = generate(&spec(0.0)).unwrap();
        let judge = MockJudge::new();
        let term = |id: &str| c.terms.iter().find(|t| t.id == id).unwrap();
        let mut negated_images = 0;
        for gt in &c.ground_truth {
            let report = c.reports.get(&gt.image_id).unwrap();
            for id in &gt.active_terms {
                assert_eq!(verdict(&judge.classify(term(id), report)), Verdict::Aligned, "{report}");
            }
            for id in &gt.negated_terms {
                assert_eq!(
                    verdict(&judge.classify(term(id), report)),
                    Verdict::Unaligned,
                    "{report}"
                );
            }
            negated_images += usize::from(!gt.negated_terms.is_empty());
        }
        // Seeded 20% rate: loose binomial bounds for 500 draws.
        assert!((60..=140).contains(&negated_images), "{negated_images}");
    }

    #[test]
    fn vocabulary_is_unambiguous_for_the_mock_judge() {
        let names: Vec<Vec<String>> = TERM_NAMES.iter().map(|n| tokenize(n)).collect();
        let cues: Vec<Vec<String>> = NEGATION_CUES.iter().map(|c| tokenize(c)).collect();
        for (i, a) in names.iter().enumerate() {
            for (j, b) in names.iter().enumerate() {
                if i != j && b.len() <= a.len() {
                    assert!(!a.windows(b.len()).any(|w| w == b.as_slice()), "{a:?} contains {b:?}");
                }
            }
            for cue in &cues {
                assert!(!a.windows(cue.len()).any(|w| w == cue.as_slice()), "{a:?} contains cue");
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec {
            n_terms: 65,
            ..spec(0.0)
        })
        .is_err());
        assert!(generate(&SynthSpec {
            active_per_image: 33,
            ..spec(0.0)
        })
        .is_err());
        assert!(generate(&SynthSpec {
            noise_sigma: -1.0,
            ..spec(0.0)
        })
        .is_err());
    }
}
