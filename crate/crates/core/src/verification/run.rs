use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{score_image, ImageScores, Judge, JudgeConfig, Verdict, VerdictDistribution, VerdictRecord};
use crate::error::{Error, Result};
use crate::extraction::PredictedConceptSet;
use crate::store::{ConceptTerm, ReportCollection};

/// An image removed from scoring because at least one judgment failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedImage {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationRun {
    pub scores: Vec<ImageScores>,
    pub dropped: Vec<DroppedImage>,
    /// Number of judge calls that returned a valid distribution.
    pub judged: usize,
}

/// Judges every concept of every set with `cfg`'s judge.
pub fn verify_dataset(
    sets: &[PredictedConceptSet],
    reports: &ReportCollection,
    terms: &[ConceptTerm],
    cfg: &JudgeConfig,
) -> Result<VerificationRun> {
    let judge = cfg.build()?;
    verify_dataset_with(sets, reports, terms, judge.as_ref(), cfg.concurrency)
}

/// Like [`verify_dataset`] with an explicit judge. Up to `concurrency`
/// judgments run at once; results are gathered in input order.
pub fn verify_dataset_with(
    sets: &[PredictedConceptSet],
    reports: &ReportCollection,
    terms: &[ConceptTerm],
    judge: &dyn Judge,
    concurrency: usize,
) -> Result<VerificationRun> {
    let by_id: HashMap<&str, &ConceptTerm> = terms.iter().map(|t| (t.id.as_str(), t)).collect();

    // Resolve everything up front so data errors surface before any judging.
    let mut jobs: Vec<(&ConceptTerm, &str)> = Vec::new();
    for set in sets {
        let report = reports
            .get(&set.image_id)
            .ok_or_else(|| Error::invalid(format!("no report for image {:?}", set.image_id)))?;
        if set.items.is_empty() {
            return Err(Error::invalid(format!(
                "image {:?} has an empty concept set",
                set.image_id
            )));
        }
        for item in &set.items {
            let term = by_id.get(item.term_id.as_str()).ok_or_else(|| {
                Error::invalid(format!(
                    "image {:?} predicts term {:?} which is not in the dictionary",
                    set.image_id, item.term_id
                ))
            })?;
            jobs.push((term, report));
        }
    }

    let results = run_jobs(&jobs, judge, concurrency.max(1));

    let mut run = VerificationRun::default();
    let mut cursor = results.into_iter();
    for set in sets {
        let mut records = Vec::with_capacity(set.items.len());
        let mut failure = None;
        for item in &set.items {
            match cursor.next().expect("one result per job") {
                Ok(dist) => {
                    run.judged += 1;
                    records.push(VerdictRecord::new(&item.term_id, &item.term_name, dist));
                }
                Err(e) => {
                    failure.get_or_insert_with(|| format!("concept {:?}: {e}", item.term_id));
                }
            }
        }
        match failure {
            Some(reason) => run.dropped.push(DroppedImage {
                image_id: set.image_id.clone(),
                reason,
            }),
            None => run.scores.push(score_image(&set.image_id, records)?),
        }
    }
    Ok(run)
}

fn run_jobs(jobs: &[(&ConceptTerm, &str)], judge: &dyn Judge, concurrency: usize) -> Vec<Result<VerdictDistribution>> {
    let workers = concurrency.min(jobs.len());
    if workers <= 1 {
        return jobs.iter().map(|(term, report)| judge.judge(term, report)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<VerdictDistribution>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((term, report)) = jobs.get(i) else { break };
                let outcome = judge.judge(term, report);
                *slots[i].lock().expect("slot lock") = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

/// One line of the scores JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScoresRecord {
    pub image_id: String,
    pub n_concepts: usize,
    pub aligned: f64,
    pub unaligned: f64,
    pub uncertain: f64,
    pub verdicts: Vec<VerdictEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub term_id: String,
    pub verdict: Verdict,
    pub dist: [f64; 3],
}

impl From<&ImageScores> for ImageScoresRecord {
    fn from(s: &ImageScores) -> Self {
        Self {
            image_id: s.image_id.clone(),
            n_concepts: s.n_concepts,
            aligned: s.scores[0],
            unaligned: s.scores[1],
            uncertain: s.scores[2],
            verdicts: s
                .records
                .iter()
                .map(|r| VerdictEntry {
                    term_id: r.term_id.clone(),
                    verdict: r.verdict,
                    dist: r.distribution.as_array(),
                })
                .collect(),
        }
    }
}

impl ImageScoresRecord {
    /// Rebuilds scores from a file line; verdicts are recomputed from `dist`.
    pub fn to_scores(&self) -> Result<ImageScores> {
        let records = self
            .verdicts
            .iter()
            .map(|v| {
                let d = VerdictDistribution::new(v.dist[0], v.dist[1], v.dist[2])?;
                Ok(VerdictRecord::new(&v.term_id, &v.term_id, d))
            })
            .collect::<Result<Vec<_>>>()?;
        if records.is_empty() {
            // Summary-only line: trust the stored fractions.
            return Ok(ImageScores {
                image_id: self.image_id.clone(),
                counts: [0; 3],
                scores: [self.aligned, self.unaligned, self.uncertain],
                n_concepts: self.n_concepts,
                records,
            });
        }
        score_image(&self.image_id, records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::PredictedConcept;
    use crate::verification::MockJudge;

    fn set(id: &str, terms: &[&str]) -> PredictedConceptSet {
        PredictedConceptSet {
            image_id: id.into(),
            items: terms
                .iter()
                .enumerate()
                .map(|(i, t)| PredictedConcept {
                    neuron: i,
                    term_id: t.to_string(),
                    term_name: t.to_string(),
                    activation: 1.0 - i as f64 * 0.1,
                })
                .collect(),
        }
    }

    fn fixture() -> (Vec<ConceptTerm>, ReportCollection) {
        let terms = vec![
            ConceptTerm::new("ascites", "ascites"),
            ConceptTerm::new("splenomegaly", "splenomegaly"),
            ConceptTerm::new("cyst", "renal cyst"),
        ];
        let mut reports = ReportCollection::new();
        reports.insert("a", "Moderate ascites. No splenomegaly.").unwrap();
        reports.insert("b", "Renal cyst on the left.").unwrap();
        (terms, reports)
    }

    struct FailOn(&'static str);

    impl Judge for FailOn {
        fn judge(&self, concept: &ConceptTerm, report: &str) -> Result<VerdictDistribution> {
            if concept.id == self.0 {
                Err(Error::Judge("connection refused".into()))
            } else {
                MockJudge::new().judge(concept, report)
            }
        }
    }

    #[test]
    fn two_images_with_mock() {
        let (terms, reports) = fixture();
        let sets = vec![
            set("a", &["ascites", "splenomegaly", "cyst"]),
            set("b", &["ascites", "splenomegaly", "cyst"]),
        ];
        let run = verify_dataset(&sets, &reports, &terms, &JudgeConfig::mock()).unwrap();
        assert_eq!(run.scores.len(), 2);
        for s in &run.scores {
            assert!((s.scores.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert_eq!(run.scores[0].counts, [1, 1, 1]);
        assert_eq!(run.scores[1].counts, [1, 0, 2]);
        assert_eq!(run.judged, 6);
    }

    #[test]
    fn concurrency_does_not_change_results() {
        let (terms, reports) = fixture();
        let sets = vec![set("a", &["ascites", "cyst"]), set("b", &["splenomegaly", "cyst"])];
        let judge = MockJudge::new();
        let serial = verify_dataset_with(&sets, &reports, &terms, &judge, 1).unwrap();
        let parallel = verify_dataset_with(&sets, &reports, &terms, &judge, 8).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn missing_report_names_the_image() {
        let (terms, reports) = fixture();
        let err = verify_dataset(&[set("zzz", &["cyst"])], &reports, &terms, &JudgeConfig::mock()).unwrap_err();
        assert!(err.to_string().contains("zzz"), "{err}");
    }

    #[test]
    fn failed_judgment_drops_the_whole_image() {
        let (terms, reports) = fixture();
        let sets = vec![set("a", &["ascites", "cyst"]), set("b", &["ascites"])];
        let run = verify_dataset_with(&sets, &reports, &terms, &FailOn("cyst"), 2).unwrap();
        assert_eq!(run.scores.len(), 1);
        assert_eq!(run.scores[0].image_id, "b");
        assert_eq!(run.dropped.len(), 1);
        assert_eq!(run.dropped[0].image_id, "a");
        assert!(run.dropped[0].reason.contains("connection refused"));
        assert_eq!(sets.len(), run.scores.len() + run.dropped.len());
    }

    #[test]
    fn record_round_trip() {
        let (terms, reports) = fixture();
        let run = verify_dataset(
            &[set("a", &["ascites", "splenomegaly"])],
            &reports,
            &terms,
            &JudgeConfig::mock(),
        )
        .unwrap();
        let rec = ImageScoresRecord::from(&run.scores[0]);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"verdict\":\"aligned\""));
        let back: ImageScoresRecord = serde_json::from_str(&json).unwrap();
        let scores = back.to_scores().unwrap();
        assert_eq!(scores.scores, run.scores[0].scores);
    }
}
