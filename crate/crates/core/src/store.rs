//! On-disk formats: EMBD embedding matrices, JSONL term lists, JSONL reports.
//!
//! EMBD layout (all integers little-endian):
//!
//! | bytes            | content                                   |
//! |------------------|-------------------------------------------|
//! | 0..4             | magic `EMBD`                              |
//! | 4..6             | format version, u16 = 1                   |
//! | 6..8             | reserved, u16 = 0                         |
//! | 8..16            | row count `R`, u64                        |
//! | 16..24           | column count `dim`, u64                   |
//! | 24..24+4·R·dim   | f32 values, row-major                     |
//! | next 8           | trailer length in bytes, u64              |
//! | rest             | UTF-8 JSON array of the `R` row ids       |

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBD_MAGIC: &[u8; 4] = b"EMBD";
pub const EMBD_VERSION: u16 = 1;
pub const EMBD_HEADER_LEN: usize = 24;

/// Row-indexed dense `f32` matrix with a unique string id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(format!(
                "{} values do not fill {} rows of dim {}",
                data.len(),
                ids.len(),
                dim
            )));
        }
        check_ids(&ids)?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at ({},{})",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { ids, dim, data })
    }

    /// Narrows an `f64` matrix to storage precision.
    pub fn from_array(ids: Vec<String>, values: &Array2<f64>) -> Result<Self> {
        let dim = values.ncols();
        let data = values.iter().map(|&v| v as f32).collect();
        if values.nrows() != ids.len() {
            return Err(Error::Dimension {
                what: "rows vs ids",
                expected: ids.len(),
                actual: values.nrows(),
            });
        }
        Self::new(ids, dim, data)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row `i` widened to `f64`.
    pub fn row_f64(&self, i: usize) -> Array1<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// The whole matrix widened to `f64`.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec(
            (self.rows(), self.dim),
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("shape checked at construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let trailer = serde_json::to_vec(&self.ids).expect("string array serializes");
        let mut out = Vec::with_capacity(EMBD_HEADER_LEN + 4 * self.data.len() + 8 + trailer.len());
        out.extend_from_slice(EMBD_MAGIC);
        out.extend_from_slice(&EMBD_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
        out.extend_from_slice(&trailer);
        out
    }

    /// Parses one complete EMBD block; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < EMBD_HEADER_LEN {
            return Err(Error::format(format!(
                "header truncated: expected {} bytes, got {}",
                EMBD_HEADER_LEN,
                bytes.len()
            )));
        }
        if &bytes[0..4] != EMBD_MAGIC {
            return Err(Error::format("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EMBD_VERSION {
            return Err(Error::format(format!(
                "version mismatch: expected {EMBD_VERSION}, got {version}"
            )));
        }
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(Error::format("reserved header bytes are not zero"));
        }
        let rows = read_u64(bytes, 8);
        let dim = read_u64(bytes, 16);
        if dim == 0 {
            return Err(Error::format("dim is zero"));
        }
        let payload_len = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .filter(|&n| n <= (bytes.len() - EMBD_HEADER_LEN) as u64)
            .ok_or_else(|| {
                Error::format(format!(
                    "payload truncated: header declares {rows}x{dim} values but only {} bytes follow the header",
                    bytes.len() - EMBD_HEADER_LEN
                ))
            })? as usize;
        let trailer_len_at = EMBD_HEADER_LEN + payload_len;
        if bytes.len() < trailer_len_at + 8 {
            return Err(Error::format(format!(
                "truncated: expected at least {} bytes, got {}",
                trailer_len_at + 8,
                bytes.len()
            )));
        }
        let trailer_len = read_u64(bytes, trailer_len_at);
        let expected = (trailer_len_at as u64 + 8).checked_add(trailer_len);
        if expected != Some(bytes.len() as u64) {
            return Err(Error::format(format!(
                "size mismatch: expected {} bytes, got {}",
                expected.map_or_else(|| "overflow".to_string(), |n| n.to_string()),
                bytes.len()
            )));
        }
        let ids: Vec<String> = serde_json::from_slice(&bytes[trailer_len_at + 8..])
            .map_err(|e| Error::format(format!("id trailer is not a JSON string array: {e}")))?;
        if ids.len() as u64 != rows {
            return Err(Error::format(format!(
                "id trailer holds {} ids for {} rows",
                ids.len(),
                rows
            )));
        }
        let data = bytes[EMBD_HEADER_LEN..trailer_len_at]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(ids, dim as usize, data).map_err(|e| match e {
            Error::Invalid(msg) => Error::Format(msg),
            other => other,
        })
    }
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&bytes[at..at + 8]);
    u64::from_le_bytes(buf)
}

fn check_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if id.is_empty() {
            return Err(Error::invalid("empty id"));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate id {id:?}")));
        }
    }
    Ok(())
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

/// One dictionary entry as stored in the terms JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptTerm {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

impl ConceptTerm {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            synonyms: Vec::new(),
        }
    }

    pub fn with_synonyms<I, S>(mut self, synonyms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.synonyms = synonyms.into_iter().map(Into::into).collect();
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("term id is empty".into());
        }
        if self.name.trim().is_empty() {
            return Err(format!("term {:?} has an empty name", self.id));
        }
        if self.synonyms.iter().any(|s| s == &self.name) {
            return Err(format!("term {:?} lists its own name as a synonym", self.id));
        }
        Ok(())
    }
}

/// Candidate vocabulary with one text embedding per term, aligned by position.
#[derive(Debug, Clone)]
pub struct ConceptDictionary {
    terms: Vec<ConceptTerm>,
    embedding: EmbeddingMatrix,
}

impl ConceptDictionary {
    pub fn new(terms: Vec<ConceptTerm>, embedding: EmbeddingMatrix) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("dictionary has no terms"));
        }
        for t in &terms {
            t.validate().map_err(Error::Invalid)?;
        }
        let term_ids: Vec<&str> = terms.iter().map(|t| t.id.as_str()).collect();
        let term_set: BTreeSet<&str> = term_ids.iter().copied().collect();
        if term_set.len() != term_ids.len() {
            return Err(Error::invalid("duplicate term id in dictionary"));
        }
        let emb_set: BTreeSet<&str> = embedding.ids().iter().map(String::as_str).collect();
        if term_set != emb_set {
            let missing: Vec<_> = term_set.difference(&emb_set).map(|s| format!("{s} missing")).collect();
            let extra: Vec<_> = emb_set.difference(&term_set).map(|s| format!("{s} extra")).collect();
            return Err(Error::invalid(format!(
                "term/embedding id mismatch: {}",
                missing.into_iter().chain(extra).collect::<Vec<_>>().join(", ")
            )));
        }
        if let Some(i) = term_ids.iter().zip(embedding.ids()).position(|(a, b)| *a != b) {
            return Err(Error::invalid(format!(
                "term/embedding order mismatch at row {i}: term {:?} vs embedding {:?}",
                term_ids[i],
                embedding.ids()[i]
            )));
        }
        for (i, id) in term_ids.iter().enumerate() {
            if embedding.row(i).iter().all(|&v| v == 0.0) {
                return Err(Error::invalid(format!("embedding for term {id:?} is the zero vector")));
            }
        }
        Ok(Self { terms, embedding })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[ConceptTerm] {
        &self.terms
    }

    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.embedding
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn term_embedding(&self, i: usize) -> Array1<f64> {
        self.embedding.row_f64(i)
    }
}

fn read_jsonl<T, F>(path: &Path, mut each: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> std::result::Result<(), String>,
{
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let value: T = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        each(i + 1, value).map_err(parse_err)?;
    }
    Ok(())
}

/// Reads every non-blank line of a JSONL file as a `T`.
pub fn read_records<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    read_jsonl(path.as_ref(), |_, value: T| {
        out.push(value);
        Ok(())
    })?;
    Ok(out)
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: impl IntoIterator<Item = T>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item).expect("serializable record");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_terms(path: impl AsRef<Path>) -> Result<Vec<ConceptTerm>> {
    let path = path.as_ref();
    let mut terms = Vec::new();
    let mut seen = HashSet::new();
    read_jsonl(path, |_, term: ConceptTerm| {
        term.validate()?;
        if !seen.insert(term.id.clone()) {
            return Err(format!("duplicate term id {:?}", term.id));
        }
        terms.push(term);
        Ok(())
    })?;
    Ok(terms)
}

pub fn write_terms(terms: &[ConceptTerm], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path, terms)
}

pub fn read_dictionary(terms_path: impl AsRef<Path>, embeddings_path: impl AsRef<Path>) -> Result<ConceptDictionary> {
    let terms = read_terms(terms_path)?;
    let embedding = read_embeddings(embeddings_path)?;
    ConceptDictionary::new(terms, embedding)
}

/// Paired free-text reports keyed by image id. Used only for evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportCollection {
    entries: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ReportLine {
    image_id: String,
    report: String,
}

impl ReportCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, report: impl Into<String>) -> Result<()> {
        let image_id = image_id.into();
        let report = report.into();
        if image_id.is_empty() {
            return Err(Error::invalid("empty image id"));
        }
        if report.trim().is_empty() {
            return Err(Error::invalid(format!("empty report for image {image_id:?}")));
        }
        if self.entries.contains_key(&image_id) {
            return Err(Error::invalid(format!("duplicate image id {image_id:?}")));
        }
        self.entries.insert(image_id, report);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<&str> {
        self.entries.get(image_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<ReportCollection> {
    let mut reports = ReportCollection::new();
    read_jsonl(path.as_ref(), |_, line: ReportLine| {
        reports.insert(line.image_id, line.report).map_err(|e| e.to_string())
    })?;
    Ok(reports)
}

pub fn write_reports(reports: &ReportCollection, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(
        path,
        reports.iter().map(|(id, text)| ReportLine {
            image_id: id.to_string(),
            report: text.to_string(),
        }),
    )
}
