//! Per-image predicted concept sets.
//!
//! A unit contributes when its activation is strictly above `tau` and it has
//! a label. With deduplication each term keeps only its strongest unit
//! (lowest neuron index on equal activation). Items are sorted by activation
//! descending, then neuron index, and truncated to `top_k` last. An image with
//! nothing left is excluded from evaluation.

use std::collections::{HashMap, HashSet};

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::naming::ConceptAssignment;
use crate::sae::SaeModel;
use crate::store::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub tau: f64,
    pub top_k: Option<usize>,
    pub dedupe_labels: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            top_k: None,
            dedupe_labels: true,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be finite and ≥ 0, got {}", self.tau)));
        }
        if self.top_k == Some(0) {
            return Err(Error::Config("top-k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedConcept {
    pub neuron: usize,
    pub term_id: String,
    #[serde(rename = "term")]
    pub term_name: String,
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedConceptSet {
    pub image_id: String,
    pub items: Vec<PredictedConcept>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extracted {
    Concepts(Vec<PredictedConcept>),
    Excluded,
}

pub fn extract(z: ArrayView1<'_, f64>, assignment: &ConceptAssignment, cfg: &ExtractionConfig) -> Result<Extracted> {
    if z.len() != assignment.len() {
        return Err(Error::Dimension {
            what: "activation length vs assignment",
            expected: assignment.len(),
            actual: z.len(),
        });
    }
    let mut items: Vec<PredictedConcept> = z
        .iter()
        .zip(&assignment.labels)
        .filter(|(&a, _)| a > cfg.tau)
        .filter_map(|(&a, label)| {
            label.term.as_ref().map(|t| PredictedConcept {
                neuron: label.neuron,
                term_id: t.id.clone(),
                term_name: t.name.clone(),
                activation: a,
            })
        })
        .collect();
    items.sort_by(|a, b| b.activation.total_cmp(&a.activation).then(a.neuron.cmp(&b.neuron)));
    if cfg.dedupe_labels {
        let mut seen = HashSet::new();
        items.retain(|item| seen.insert(item.term_id.clone()));
    }
    if let Some(k) = cfg.top_k {
        items.truncate(k);
    }
    Ok(if items.is_empty() {
        Extracted::Excluded
    } else {
        Extracted::Concepts(items)
    })
}

/// Concept sets in input row order plus the ids of excluded images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetExtraction {
    pub sets: Vec<PredictedConceptSet>,
    pub excluded: Vec<String>,
}

pub fn extract_dataset(
    data: &EmbeddingMatrix,
    model: &SaeModel,
    assignment: &ConceptAssignment,
    cfg: &ExtractionConfig,
) -> Result<DatasetExtraction> {
    cfg.validate()?;
    if data.dim() != model.m() {
        return Err(Error::Dimension {
            what: "embedding dim vs model input dim",
            expected: model.m(),
            actual: data.dim(),
        });
    }
    let mut out = DatasetExtraction::default();
    for (i, id) in data.ids().iter().enumerate() {
        let z = model.encode(data.row_f64(i).view())?;
        match extract(z.view(), assignment, cfg)? {
            Extracted::Concepts(items) => out.sets.push(PredictedConceptSet {
                image_id: id.clone(),
                items,
            }),
            Extracted::Excluded => out.excluded.push(id.clone()),
        }
    }
    Ok(out)
}

/// One line of the concept-set JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSetRecord {
    pub image_id: String,
    pub concepts: Vec<PredictedConcept>,
    pub excluded: bool,
}

impl DatasetExtraction {
    /// Records in the original row order of `ids`.
    pub fn to_records(&self, ids: &[String]) -> Vec<ConceptSetRecord> {
        let by_id: HashMap<&str, &PredictedConceptSet> = self.sets.iter().map(|s| (s.image_id.as_str(), s)).collect();
        ids.iter()
            .map(|id| match by_id.get(id.as_str()) {
                Some(set) => ConceptSetRecord {
                    image_id: id.clone(),
                    concepts: set.items.clone(),
                    excluded: false,
                },
                None => ConceptSetRecord {
                    image_id: id.clone(),
                    concepts: Vec::new(),
                    excluded: true,
                },
            })
            .collect()
    }

    pub fn from_records(records: Vec<ConceptSetRecord>) -> Result<Self> {
        let mut out = Self::default();
        for rec in records {
            if rec.excluded {
                out.excluded.push(rec.image_id);
            } else if rec.concepts.is_empty() {
                return Err(Error::invalid(format!(
                    "image {:?} is not excluded but has no concepts",
                    rec.image_id
                )));
            } else {
                out.sets.push(PredictedConceptSet {
                    image_id: rec.image_id,
                    items: rec.concepts,
                });
            }
        }
        Ok(out)
    }
}
