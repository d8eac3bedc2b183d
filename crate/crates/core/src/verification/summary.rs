use serde::{Deserialize, Serialize};

use super::ImageScores;
use crate::error::{Error, Result};

/// Five-number summary plus mean of one score class across images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub n_images: usize,
    pub aligned: ClassSummary,
    pub unaligned: ClassSummary,
    pub uncertain: ClassSummary,
}

/// Quantile of ascending `sorted` values by linear interpolation between
/// order statistics at position `p · (n − 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn summarize(mut values: Vec<f64>) -> ClassSummary {
    values.sort_by(f64::total_cmp);
    ClassSummary {
        min: values[0],
        q1: quantile(&values, 0.25),
        median: quantile(&values, 0.5),
        q3: quantile(&values, 0.75),
        max: values[values.len() - 1],
        mean: values.iter().sum::<f64>() / values.len() as f64,
    }
}

pub fn aggregate_scores(scores: &[ImageScores]) -> Result<ScoreSummary> {
    if scores.is_empty() {
        return Err(Error::invalid("no image scores to summarize"));
    }
    let class = |i: usize| summarize(scores.iter().map(|s| s.scores[i]).collect());
    Ok(ScoreSummary {
        n_images: scores.len(),
        aligned: class(0),
        unaligned: class(1),
        uncertain: class(2),
    })
}
