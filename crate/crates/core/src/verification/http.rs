use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Judge, JudgeConfig, VerdictDistribution};
use crate::error::{Error, Result};
use crate::store::ConceptTerm;

#[derive(Debug, Serialize)]
struct JudgeRequest<'a> {
    concept: &'a str,
    synonyms: &'a [String],
    report: &'a str,
    temperature: f64,
    template: &'a str,
}

#[derive(Debug, Deserialize)]
struct JudgeResponse {
    aligned: f64,
    unaligned: f64,
    uncertain: f64,
}

/// Client for an external judge service.
///
/// Each concept is one `POST` of
/// `{"concept","synonyms","report","temperature","template"}`; the endpoint
/// answers `{"aligned","unaligned","uncertain"}`. Transport failures and
/// non-2xx statuses are retried; malformed bodies are not.
pub struct HttpJudge {
    agent: ureq::Agent,
    endpoint: String,
    temperature: f64,
    template: String,
    retries: u32,
    backoff: Duration,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl HttpJudge {
    pub fn new(cfg: &JudgeConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .clone()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| Error::Config("http judge requires an endpoint".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint,
            temperature: cfg.temperature,
            template: cfg.template.clone(),
            retries: cfg.retries,
            backoff: Duration::from_millis(200),
        })
    }

    /// Overrides the pause between retries (default 200 ms, doubled per attempt).
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, body: &JudgeRequest<'_>) -> std::result::Result<VerdictDistribution, Attempt> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| Attempt::Retry(format!("transport: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Attempt::Retry(format!("endpoint returned HTTP {}", status.as_u16())));
        }
        let parsed: JudgeResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(format!("malformed response: {e}")))?;
        VerdictDistribution::new(parsed.aligned, parsed.unaligned, parsed.uncertain)
            .map_err(|e| Attempt::Fatal(e.to_string()))
    }
}

impl Judge for HttpJudge {
    fn judge(&self, concept: &ConceptTerm, report: &str) -> Result<VerdictDistribution> {
        let body = JudgeRequest {
            concept: &concept.name,
            synonyms: &concept.synonyms,
            report,
            temperature: self.temperature,
            template: &self.template,
        };
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(d) => return Ok(d),
                Err(Attempt::Fatal(msg)) => return Err(Error::Judge(msg)),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(Error::Judge(format!(
            "{} after {} attempt(s) for concept {:?}",
            last,
            self.retries + 1,
            concept.id
        )))
    }
}
