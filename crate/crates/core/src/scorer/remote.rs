//! HTTP client for the cross-encoder scoring service.
//!
//! `POST {endpoint}/score` with `{"model": "sts"|"is", "pairs": [[q, p], ...]}`
//! answers `{"scores": [...]}` in request order. A 503 means the model is
//! still loading; the client backs off and retries.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Provenance, ScoreBackend, ScoreItem, ScorerError, ScorerKind};

/// Response header carrying the checkpoint identifier of the serving model.
pub const CHECKPOINT_HEADER: &str = "x-checkpoint-id";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 6,
            initial_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    batch_size: usize,
    checkpoints: Mutex<BTreeMap<String, String>>,
}

impl RemoteBackend {
    pub fn new(endpoint: &str) -> Self {
        RemoteBackend {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(10))
                .timeout(Duration::from_secs(300))
                .build(),
            retry: RetryPolicy::default(),
            batch_size: 64,
            checkpoints: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    fn post(&self, kind: ScorerKind, body: &ScoreRequest<'_>) -> Result<ureq::Response, ScorerError> {
        let url = format!("{}/score", self.endpoint);
        let mut delay = self.retry.initial_delay;
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            match self.agent.post(&url).send_json(body) {
                Ok(resp) => return Ok(resp),
                Err(ureq::Error::Status(503, resp)) => {
                    let wait = resp
                        .header("retry-after")
                        .and_then(|s| s.trim().parse::<u64>().ok())
                        .map(Duration::from_secs)
                        .unwrap_or(delay)
                        .min(self.retry.max_delay);
                    last = "model loading (503)".into();
                    log::info!("{kind} scorer loading, retry {attempt} in {wait:?}");
                    if attempt < self.retry.max_attempts {
                        thread::sleep(wait);
                    }
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    return Err(ScorerError::Contract {
                        scorer: kind,
                        detail: format!("HTTP {code} from {url}: {}", text.trim()),
                    });
                }
                Err(ureq::Error::Transport(t)) => {
                    last = t.to_string();
                    log::warn!("{kind} scorer transport error on attempt {attempt}: {t}");
                    if attempt < self.retry.max_attempts {
                        thread::sleep(delay);
                    }
                }
            }
            delay = (delay * 2).min(self.retry.max_delay);
        }
        Err(ScorerError::Transport(format!(
            "{url} after {} attempts: {last}",
            self.retry.max_attempts
        )))
    }
}

impl ScoreBackend for RemoteBackend {
    fn provenance(&self) -> Provenance {
        Provenance::Remote
    }

    fn tag(&self) -> String {
        self.endpoint.clone()
    }

    fn max_batch(&self) -> usize {
        self.batch_size
    }

    fn score_batch(&self, kind: ScorerKind, items: &[ScoreItem<'_>]) -> Result<Vec<f64>, ScorerError> {
        let body = ScoreRequest {
            model: kind.as_str(),
            pairs: items.iter().map(|i| [i.query, i.passage]).collect(),
        };
        let resp = self.post(kind, &body)?;
        if let Some(ckpt) = resp.header(CHECKPOINT_HEADER) {
            self.checkpoints
                .lock()
                .expect("checkpoint lock poisoned")
                .insert(kind.as_str().to_string(), ckpt.to_string());
        }
        let parsed: ScoreResponse = resp.into_json().map_err(|e| ScorerError::Contract {
            scorer: kind,
            detail: format!("unparseable response: {e}"),
        })?;
        Ok(parsed.scores)
    }

    fn checkpoints(&self) -> BTreeMap<String, String> {
        self.checkpoints.lock().expect("checkpoint lock poisoned").clone()
    }
}
