//! Grounds latent units in the concept dictionary: unit `j` takes the term
//! whose text embedding has the highest cosine similarity with decoder
//! column `j`.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sae::SaeModel;
use crate::store::ConceptDictionary;

/// Decoder columns with an ℓ2 norm below this are dead and stay unnamed.
pub const DEAD_NEURON_NORM: f64 = 1e-10;

/// `a·b / (‖a‖‖b‖)` clamped to `[−1, 1]`. Zero vectors are an error.
pub fn cosine_similarity(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "cosine operand length",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector is undefined"));
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Dense `k × N` cosine similarities between decoder columns and term
/// embeddings. Rows of dead units are zero and flagged in `dead`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    pub dead: Vec<bool>,
}

pub fn similarity_matrix(model: &SaeModel, dict: &ConceptDictionary) -> Result<SimilarityMatrix> {
    if model.m() != dict.dim() {
        return Err(Error::Dimension {
            what: "dictionary embedding dim vs model input dim",
            expected: model.m(),
            actual: dict.dim(),
        });
    }
    let k = model.k();
    let terms: Vec<_> = (0..dict.len()).map(|i| dict.term_embedding(i)).collect();
    let mut values = Array2::zeros((k, dict.len()));
    let mut dead = vec![false; k];
    for j in 0..k {
        let column = model.decoder_weight.column(j);
        if column.dot(&column).sqrt() < DEAD_NEURON_NORM {
            dead[j] = true;
            continue;
        }
        for (i, e) in terms.iter().enumerate() {
            values[[j, i]] = cosine_similarity(column, e.view())?;
        }
    }
    Ok(SimilarityMatrix { values, dead })
}

/// Label of one latent unit. `term` is `None` for dead units.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronLabel {
    pub neuron: usize,
    pub term: Option<AssignedTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignedTerm {
    pub index: usize,
    pub id: String,
    pub name: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptAssignment {
    pub labels: Vec<NeuronLabel>,
    pub similarities: Option<SimilarityMatrix>,
}

impl ConceptAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dead_count(&self) -> usize {
        self.labels.iter().filter(|l| l.term.is_none()).count()
    }

    pub fn to_records(&self) -> Vec<AssignmentRecord> {
        self.labels
            .iter()
            .map(|l| AssignmentRecord {
                neuron: l.neuron,
                term_id: l.term.as_ref().map(|t| t.id.clone()),
                term_name: l.term.as_ref().map(|t| t.name.clone()),
                similarity: l.term.as_ref().map(|t| t.similarity),
            })
            .collect()
    }

    /// Rebuilds an assignment from its JSONL records, resolving term ids
    /// against `dict` so names and indices are authoritative.
    pub fn from_records(records: &[AssignmentRecord], dict: &[crate::store::ConceptTerm]) -> Result<Self> {
        let mut labels = Vec::with_capacity(records.len());
        for (pos, rec) in records.iter().enumerate() {
            if rec.neuron != pos {
                return Err(Error::invalid(format!(
                    "assignment records must list neurons in order: line {} names neuron {}",
                    pos + 1,
                    rec.neuron
                )));
            }
            let term = match &rec.term_id {
                None => None,
                Some(id) => {
                    let index = dict
                        .iter()
                        .position(|t| &t.id == id)
                        .ok_or_else(|| Error::invalid(format!("assignment names unknown term id {id:?}")))?;
                    Some(AssignedTerm {
                        index,
                        id: id.clone(),
                        name: dict[index].name.clone(),
                        similarity: rec.similarity.unwrap_or(f64::NAN),
                    })
                }
            };
            labels.push(NeuronLabel { neuron: pos, term });
        }
        Ok(Self {
            labels,
            similarities: None,
        })
    }
}

/// One line of the assignment JSONL file. Dead units carry `null` fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub neuron: usize,
    pub term_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// Argmax naming; ties go to the lowest dictionary index.
pub fn assign_names(model: &SaeModel, dict: &ConceptDictionary) -> Result<ConceptAssignment> {
    let sims = similarity_matrix(model, dict)?;
    let labels = sims
        .values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, row)| {
            if sims.dead[j] {
                return NeuronLabel { neuron: j, term: None };
            }
            let mut best = 0;
            for (i, &s) in row.iter().enumerate().skip(1) {
                if s > row[best] {
                    best = i;
                }
            }
            let term = &dict.terms()[best];
            NeuronLabel {
                neuron: j,
                term: Some(AssignedTerm {
                    index: best,
                    id: term.id.clone(),
                    name: term.name.clone(),
                    similarity: row[best],
                }),
            }
        })
        .collect();
    Ok(ConceptAssignment {
        labels,
        similarities: Some(sims),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ConceptTerm, EmbeddingMatrix};
    use ndarray::{array, Array1};

    fn dict_from(rows: &[Vec<f64>]) -> ConceptDictionary {
        let n = rows.len();
        let dim = rows[0].len();
        let terms = (0..n)
            .map(|i| ConceptTerm::new(format!("t{i}"), format!("term {i}")))
            .collect();
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        let emb = EmbeddingMatrix::new((0..n).map(|i| format!("t{i}")).collect(), dim, data).unwrap();
        ConceptDictionary::new(terms, emb).unwrap()
    }

    fn model_with_decoder(decoder: Array2<f64>) -> SaeModel {
        let (m, k) = decoder.dim();
        SaeModel::from_parts(Array2::zeros((k, m)), Array1::zeros(k), decoder, Array1::zeros(m)).unwrap()
    }

    #[test]
    fn cosine_cases() {
        let c = |a: [f64; 2], b: [f64; 2]| cosine_similarity(ArrayView1::from(&a), ArrayView1::from(&b)).unwrap();
        assert_eq!(c([1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(c([1.0, 0.0], [0.0, 1.0]), 0.0);
        assert!((c([1.0, 0.0], [1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine_similarity(array![0.0, 0.0].view(), array![1.0, 0.0].view()).is_err());
        assert!(cosine_similarity(array![1.0].view(), array![1.0, 0.0].view()).is_err());
    }

    #[test]
    fn diagonal_pairing() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.5]];
        let dict = dict_from(&rows);
        let model = model_with_decoder(Array2::eye(3));
        let a = assign_names(&model, &dict).unwrap();
        for (j, label) in a.labels.iter().enumerate() {
            let t = label.term.as_ref().unwrap();
            assert_eq!(t.index, j);
            assert_eq!(t.similarity, 1.0);
        }
        let sims = a.similarities.unwrap();
        for j in 0..3 {
            assert_eq!(sims.values[[j, j]], 1.0);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // Terms 2 and 5 are identical, so neuron 0 is exactly equidistant.
        let mut rows: Vec<Vec<f64>> = (0..6).map(|i| vec![0.0, 0.0, 1.0 + i as f64]).collect();
        rows[2] = vec![1.0, 0.0, 0.0];
        rows[5] = vec![1.0, 0.0, 0.0];
        let dict = dict_from(&rows);
        let model = model_with_decoder(array![[1.0], [0.5], [0.0]]);
        let a = assign_names(&model, &dict).unwrap();
        assert_eq!(a.labels[0].term.as_ref().unwrap().index, 2);
    }

    #[test]
    fn scaled_term_gives_identical_column() {
        let rows = vec![vec![1.0, 2.0], vec![-0.5, 1.0]];
        let mut scaled = rows.clone();
        scaled[1] = vec![-5.0, 10.0];
        let model = model_with_decoder(array![[0.3, -1.0, 0.7], [0.9, 0.2, 0.1]]);
        let a = similarity_matrix(&model, &dict_from(&rows)).unwrap();
        let b = similarity_matrix(&model, &dict_from(&scaled)).unwrap();
        for (x, y) in a.values.column(1).iter().zip(b.values.column(1)) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn dead_units_are_unassigned() {
        let dict = dict_from(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let model = model_with_decoder(array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        let a = assign_names(&model, &dict).unwrap();
        assert!(a.labels[1].term.is_none());
        assert_eq!(a.dead_count(), 1);
        assert_eq!(a.labels[2].term.as_ref().unwrap().index, 1);
        let recs = a.to_records();
        assert_eq!(recs[1].term_id, None);
        let back = ConceptAssignment::from_records(&recs, dict.terms()).unwrap();
        assert_eq!(back.labels, a.labels);
    }

    #[test]
    fn dimension_mismatch_names_both_dims() {
        let dict = dict_from(&[vec![1.0, 0.0, 0.0]]);
        let model = model_with_decoder(Array2::eye(2));
        let err = assign_names(&model, &dict).unwrap_err().to_string();
        assert!(err.contains("expected 2") && err.contains("got 3"), "{err}");
    }
}
