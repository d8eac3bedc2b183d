//! Report-grounded verification of predicted concepts.
//!
//! Every concept in an image's predicted set is judged against the paired
//! report, yielding a distribution over {aligned, unaligned, uncertain}. The
//! discrete verdict is the argmax (ties: aligned, then unaligned, then
//! uncertain) and an image's score for class `c` is the fraction of its
//! concepts whose verdict is `c`.

mod http;
mod mock;
mod run;
mod summary;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::ConceptTerm;

pub use http::HttpJudge;
pub use mock::{tokenize, MockJudge, NEGATION_CUES, NEGATION_WINDOW};
pub use run::{verify_dataset, verify_dataset_with, DroppedImage, ImageScoresRecord, VerdictEntry, VerificationRun};
pub use summary::{aggregate_scores, quantile, ClassSummary, ScoreSummary};

/// Probability sums further than this from 1 are rejected on ingestion.
pub const DISTRIBUTION_INGEST_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Aligned,
    Unaligned,
    Uncertain,
}

impl Verdict {
    /// Tie-break order.
    pub const ALL: [Verdict; 3] = [Verdict::Aligned, Verdict::Unaligned, Verdict::Uncertain];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Aligned => "aligned",
            Verdict::Unaligned => "unaligned",
            Verdict::Uncertain => "uncertain",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Probability triple over the three classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictDistribution {
    pub aligned: f64,
    pub unaligned: f64,
    pub uncertain: f64,
}

impl VerdictDistribution {
    pub const ALIGNED: Self = Self::raw(1.0, 0.0, 0.0);
    pub const UNALIGNED: Self = Self::raw(0.0, 1.0, 0.0);
    pub const UNCERTAIN: Self = Self::raw(0.0, 0.0, 1.0);

    const fn raw(aligned: f64, unaligned: f64, uncertain: f64) -> Self {
        Self {
            aligned,
            unaligned,
            uncertain,
        }
    }

    /// Validates a triple; sums within 1e−3 of one are renormalized.
    pub fn new(aligned: f64, unaligned: f64, uncertain: f64) -> Result<Self> {
        let parts = [aligned, unaligned, uncertain];
        if parts.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(Error::Judge(format!("probabilities must lie in [0, 1], got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_INGEST_TOLERANCE {
            return Err(Error::Judge(format!("probabilities sum to {sum}, not 1")));
        }
        if sum == 1.0 {
            return Ok(Self::raw(aligned, unaligned, uncertain));
        }
        Ok(Self::raw(aligned / sum, unaligned / sum, uncertain / sum))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.aligned, self.unaligned, self.uncertain]
    }
}

/// Argmax class with ties resolved as aligned > unaligned > uncertain.
pub fn verdict(d: &VerdictDistribution) -> Verdict {
    let p = d.as_array();
    let mut best = Verdict::Aligned;
    for c in &Verdict::ALL[1..] {
        if p[c.index()] > p[best.index()] {
            best = *c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    pub term_id: String,
    pub term_name: String,
    pub distribution: VerdictDistribution,
    pub verdict: Verdict,
}

impl VerdictRecord {
    pub fn new(term_id: impl Into<String>, term_name: impl Into<String>, distribution: VerdictDistribution) -> Self {
        Self {
            term_id: term_id.into(),
            term_name: term_name.into(),
            verdict: verdict(&distribution),
            distribution,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScores {
    pub image_id: String,
    /// Verdict counts in the order aligned, unaligned, uncertain.
    pub counts: [usize; 3],
    pub scores: [f64; 3],
    pub n_concepts: usize,
    pub records: Vec<VerdictRecord>,
}

impl ImageScores {
    pub fn score(&self, c: Verdict) -> f64 {
        self.scores[c.index()]
    }
}

/// Fraction of records per verdict class.
pub fn score_image(image_id: impl Into<String>, records: Vec<VerdictRecord>) -> Result<ImageScores> {
    if records.is_empty() {
        return Err(Error::invalid("cannot score an image with no judged concepts"));
    }
    let mut counts = [0usize; 3];
    for r in &records {
        counts[r.verdict.index()] += 1;
    }
    let n = records.len();
    Ok(ImageScores {
        image_id: image_id.into(),
        counts,
        scores: counts.map(|c| c as f64 / n as f64),
        n_concepts: n,
        records,
    })
}

/// Maps `(concept, report)` to a distribution over the three classes.
pub trait Judge: Send + Sync {
    fn judge(&self, concept: &ConceptTerm, report: &str) -> Result<VerdictDistribution>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Mock,
    Http,
}

impl FromStr for JudgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(JudgeKind::Mock),
            "http" => Ok(JudgeKind::Http),
            other => Err(Error::Config(format!("unknown judge kind {other:?}"))),
        }
    }
}

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Report: {report}\nConcept: {concept}\nClassify the concept as aligned, unaligned, or uncertain with respect to the report and return a probability for each.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub kind: JudgeKind,
    pub endpoint: Option<String>,
    pub temperature: f64,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub concurrency: usize,
    pub retries: u32,
    pub template: String,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            kind: JudgeKind::Mock,
            endpoint: None,
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            concurrency: 4,
            retries: 2,
            template: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }
}

impl JudgeConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(Error::Config(format!(
                "temperature must be in [0, 1], got {}",
                self.temperature
            )));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be ≥ 1".into()));
        }
        if !self.template.contains("{concept}") || !self.template.contains("{report}") {
            return Err(Error::Config(
                "prompt template needs {concept} and {report} placeholders".into(),
            ));
        }
        if self.kind == JudgeKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Error::Config("http judge requires an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Judge>> {
        self.validate()?;
        Ok(match self.kind {
            JudgeKind::Mock => Box::new(MockJudge::new()),
            JudgeKind::Http => Box::new(HttpJudge::new(self)?),
        })
    }
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
