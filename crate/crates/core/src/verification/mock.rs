use super::{Judge, VerdictDistribution};
use crate::error::Result;
use crate::store::ConceptTerm;

/// Cues that negate a mention when they end within this many tokens before it.
pub const NEGATION_WINDOW: usize = 6;

pub const NEGATION_CUES: [&str; 8] = [
    "no",
    "without",
    "absent",
    "negative",
    "denies",
    "free of",
    "ruled out",
    "resolved",
];

/// Deterministic keyword judge used as the offline stand-in for an LLM.
///
/// The report is lowercased and split into alphanumeric word tokens. The
/// concept matches where its name or any synonym occurs as a contiguous token
/// sequence. A match is negated when a cue from [`NEGATION_CUES`] lies
/// entirely inside the [`NEGATION_WINDOW`] tokens before the match start.
/// Any non-negated match gives aligned, only negated matches give unaligned,
/// and no match gives uncertain. Temperature plays no role.
#[derive(Debug, Clone)]
pub struct MockJudge {
    cues: Vec<Vec<String>>,
}

impl Default for MockJudge {
    fn default() -> Self {
        Self::new()
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn occurrences<'a>(haystack: &'a [String], needle: &'a [String]) -> impl Iterator<Item = usize> + 'a {
    let n = needle.len();
    (0..haystack.len().saturating_sub(n.saturating_sub(1))).filter(move |&i| n > 0 && haystack[i..i + n] == *needle)
}

impl MockJudge {
    pub fn new() -> Self {
        Self {
            cues: NEGATION_CUES.iter().map(|c| tokenize(c)).collect(),
        }
    }

    fn negated(&self, tokens: &[String], start: usize) -> bool {
        let window = &tokens[start.saturating_sub(NEGATION_WINDOW)..start];
        self.cues.iter().any(|cue| occurrences(window, cue).next().is_some())
    }

    pub fn classify(&self, concept: &ConceptTerm, report: &str) -> VerdictDistribution {
        let tokens = tokenize(report);
        let mut matched = false;
        for phrase in std::iter::once(&concept.name).chain(&concept.synonyms) {
            let needle = tokenize(phrase);
            for start in occurrences(&tokens, &needle) {
                if !self.negated(&tokens, start) {
                    return VerdictDistribution::ALIGNED;
                }
                matched = true;
            }
        }
        if matched {
            VerdictDistribution::UNALIGNED
        } else {
            VerdictDistribution::UNCERTAIN
        }
    }
}

impl Judge for MockJudge {
    fn judge(&self, concept: &ConceptTerm, report: &str) -> Result<VerdictDistribution> {
        Ok(self.classify(concept, report))
    }
}
