//! Dense relevance signals: semantic similarity (STS) and inference
//! similarity (IS).
//!
//! A [`Scorer`] fronts one [`ScoreBackend`] (remote cross-encoder service,
//! deterministic proxy, or a cache-only replay) and an optional
//! write-through [`ScoreCache`]. Every score that leaves a `Scorer` has been
//! checked against `[0, 1]` and rounded to six decimals, so a cold run and
//! a warm-cache replay see bit-identical values.

mod cache;
mod proxy;
mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateId, QuestionRecord};
use crate::ranking::{Ranking, Strategy};

pub use cache::{CacheEntry, CacheOnlyBackend, ScoreCache};
pub use proxy::ProxyBackend;
pub use remote::{RemoteBackend, RetryPolicy, CHECKPOINT_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Semantic textual similarity (MS MARCO-style cross-encoder).
    Sts,
    /// Inference similarity (QNLI-style cross-encoder).
    Is,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Sts => "sts",
            ScorerKind::Is => "is",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            ScorerKind::Sts => Strategy::Sts,
            ScorerKind::Is => Strategy::Is,
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sts" | "msmarco" => Ok(ScorerKind::Sts),
            "is" | "qnli" => Ok(ScorerKind::Is),
            _ => Err(format!("unknown scorer {s:?} (expected sts or is)")),
        }
    }
}

/// A signal bound to a concrete backend for the duration of a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScorerId {
    pub kind: ScorerKind,
    pub backend: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Remote,
    Cache,
    Proxy,
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(Provenance::Remote),
            "cache" => Ok(Provenance::Cache),
            "proxy" => Ok(Provenance::Proxy),
            _ => Err(format!("unknown scorer backend {s:?} (expected remote, cache or proxy)")),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Remote => "remote",
            Provenance::Cache => "cache",
            Provenance::Proxy => "proxy",
        })
    }
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer backend unavailable: {0}")]
    Transport(String),
    #[error("{scorer} backend returned {value} for {key}, outside [0, 1]")]
    OutOfRange {
        scorer: ScorerKind,
        key: String,
        value: f64,
    },
    #[error("{scorer} backend contract violation: {detail}")]
    Contract { scorer: ScorerKind, detail: String },
    #[error("no cached {scorer} score for question {question_id}, item {key}; populate the cache with the `score` command or switch scorer.backend")]
    CacheMiss {
        scorer: ScorerKind,
        question_id: String,
        key: String,
    },
    #[error("{scorer} table for question {question_id} is missing candidate {candidate}")]
    Incomplete {
        scorer: ScorerKind,
        question_id: String,
        candidate: CandidateId,
    },
    #[error("score cache {path}: {detail}")]
    CacheFile { path: String, detail: String },
}

impl ScorerError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ScorerError::Transport(_))
    }
}

/// One query/passage pair to score. `key` identifies the passage within
/// its question for caching: a candidate id for single sentences, or a
/// composite key from [`pair_key`] / [`augmented_key`].
#[derive(Debug, Clone, Copy)]
pub struct ScoreItem<'a> {
    pub question_id: &'a str,
    pub key: &'a str,
    pub query: &'a str,
    pub passage: &'a str,
}

pub trait ScoreBackend: Send + Sync {
    fn provenance(&self) -> Provenance;

    /// Free-form backend tag, e.g. the endpoint URL.
    fn tag(&self) -> String;

    /// Largest batch the backend accepts per call.
    fn max_batch(&self) -> usize {
        usize::MAX
    }

    fn score_batch(&self, kind: ScorerKind, items: &[ScoreItem<'_>]) -> Result<Vec<f64>, ScorerError>;

    /// Checkpoint identifiers reported by the backend, keyed by model.
    fn checkpoints(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

/// Cache key for the concatenated pair `a ∥ b`.
pub fn pair_key(a: &CandidateId, b: &CandidateId) -> String {
    serde_json::to_string(&["pair", a.as_str(), b.as_str()]).expect("strings serialize")
}

/// Cache key for scoring `candidate` against the question augmented with
/// the pair `a ∥ b`.
pub fn augmented_key(a: &CandidateId, b: &CandidateId, candidate: &CandidateId) -> String {
    serde_json::to_string(&["aug", a.as_str(), b.as_str(), candidate.as_str()])
        .expect("strings serialize")
}

/// Rounds to the six-decimal form used by the cache file.
pub fn quantize(score: f64) -> f64 {
    format!("{score:.6}").parse().expect("formatted float parses")
}

pub struct Scorer {
    backend: Arc<dyn ScoreBackend>,
    cache: Option<Arc<ScoreCache>>,
    backend_calls: AtomicUsize,
    pairs_sent: AtomicUsize,
}

impl fmt::Debug for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scorer")
            .field("backend", &self.backend.tag())
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl Scorer {
    pub fn new(backend: Arc<dyn ScoreBackend>) -> Self {
        Scorer {
            backend,
            cache: None,
            backend_calls: AtomicUsize::new(0),
            pairs_sent: AtomicUsize::new(0),
        }
    }

    pub fn proxy() -> Self {
        Scorer::new(Arc::new(ProxyBackend))
    }

    pub fn with_cache(mut self, cache: Arc<ScoreCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn cache(&self) -> Option<&Arc<ScoreCache>> {
        self.cache.as_ref()
    }

    pub fn provenance(&self) -> Provenance {
        self.backend.provenance()
    }

    pub fn id(&self, kind: ScorerKind) -> ScorerId {
        ScorerId {
            kind,
            backend: self.backend.tag(),
        }
    }

    pub fn checkpoints(&self) -> BTreeMap<String, String> {
        self.backend.checkpoints()
    }

    /// Number of batch requests that reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    /// Number of individual pairs that reached the backend.
    pub fn pairs_sent(&self) -> usize {
        self.pairs_sent.load(Ordering::Relaxed)
    }

    pub fn score(&self, kind: ScorerKind, item: ScoreItem<'_>) -> Result<f64, ScorerError> {
        Ok(self.score_items(kind, &[item])?.0[0])
    }

    /// Scores all items; cached values are reused and new values are only
    /// cached once every chunk has succeeded. The flag reports whether every
    /// value came from the cache.
    pub fn score_items(
        &self,
        kind: ScorerKind,
        items: &[ScoreItem<'_>],
    ) -> Result<(Vec<f64>, bool), ScorerError> {
        let mut out = vec![f64::NAN; items.len()];
        let mut misses = Vec::new();
        for (i, item) in items.iter().enumerate() {
            match self
                .cache
                .as_ref()
                .and_then(|c| c.get(item.question_id, item.key, kind))
            {
                Some(v) => out[i] = v,
                None => misses.push(i),
            }
        }
        if misses.is_empty() {
            return Ok((out, true));
        }

        let chunk = self.backend.max_batch().max(1);
        let mut fresh = Vec::with_capacity(misses.len());
        for idxs in misses.chunks(chunk) {
            let batch: Vec<ScoreItem<'_>> = idxs.iter().map(|&i| items[i]).collect();
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            self.pairs_sent.fetch_add(batch.len(), Ordering::Relaxed);
            let scores = self.backend.score_batch(kind, &batch)?;
            if scores.len() != batch.len() {
                return Err(ScorerError::Contract {
                    scorer: kind,
                    detail: format!("sent {} pairs, received {} scores", batch.len(), scores.len()),
                });
            }
            for (&i, s) in idxs.iter().zip(scores) {
                if !(0.0..=1.0).contains(&s) {
                    return Err(ScorerError::OutOfRange {
                        scorer: kind,
                        key: items[i].key.to_string(),
                        value: s,
                    });
                }
                fresh.push((i, quantize(s)));
            }
        }

        if let Some(cache) = &self.cache {
            cache.insert_all(fresh.iter().map(|&(i, s)| CacheEntry {
                question_id: items[i].question_id.to_string(),
                candidate_id: items[i].key.to_string(),
                scorer: kind,
                score: s,
            }));
        }
        for (i, s) in fresh {
            out[i] = s;
        }
        Ok((out, false))
    }
}

/// Per-question dense scores for the candidate pool.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTable {
    pub question_id: String,
    pub entries: BTreeMap<(CandidateId, ScorerKind), f64>,
    pub provenance: BTreeMap<ScorerKind, Provenance>,
}

impl ScoreTable {
    pub fn new(question_id: &str) -> Self {
        ScoreTable {
            question_id: question_id.to_string(),
            ..Default::default()
        }
    }

    pub fn get(&self, id: &CandidateId, kind: ScorerKind) -> Option<f64> {
        self.entries.get(&(id.clone(), kind)).copied()
    }

    pub fn insert(&mut self, id: CandidateId, kind: ScorerKind, score: f64) {
        self.entries.insert((id, kind), score);
    }

    /// Merges a fragment for the same question.
    pub fn merge(&mut self, other: ScoreTable) {
        debug_assert_eq!(self.question_id, other.question_id);
        self.entries.extend(other.entries);
        self.provenance.extend(other.provenance);
    }

    /// Scores for `kind` in pool order; fails if any candidate is missing.
    pub fn scores_for(&self, kind: ScorerKind, record: &QuestionRecord) -> Result<Vec<f64>, ScorerError> {
        record
            .candidates
            .iter()
            .map(|c| {
                self.get(&c.candidate_id, kind)
                    .ok_or_else(|| ScorerError::Incomplete {
                        scorer: kind,
                        question_id: record.question_id.clone(),
                        candidate: c.candidate_id.clone(),
                    })
            })
            .collect()
    }

    pub fn is_complete(&self, kind: ScorerKind, record: &QuestionRecord) -> bool {
        self.scores_for(kind, record).is_ok()
    }
}

/// Scores every candidate of `record` under `kind`. All-or-nothing: on any
/// backend failure no fragment is returned and nothing is cached.
pub fn score_pool(
    scorer: &Scorer,
    kind: ScorerKind,
    record: &QuestionRecord,
) -> Result<ScoreTable, ScorerError> {
    let items: Vec<ScoreItem<'_>> = record
        .candidates
        .iter()
        .map(|c| ScoreItem {
            question_id: &record.question_id,
            key: c.candidate_id.as_str(),
            query: &record.question_text,
            passage: &c.text,
        })
        .collect();
    let (scores, all_cached) = scorer.score_items(kind, &items)?;
    let mut table = ScoreTable::new(&record.question_id);
    for (c, s) in record.candidates.iter().zip(scores) {
        table.insert(c.candidate_id.clone(), kind, s);
    }
    let provenance = if all_cached && !record.candidates.is_empty() {
        Provenance::Cache
    } else {
        scorer.provenance()
    };
    table.provenance.insert(kind, provenance);
    Ok(table)
}

/// Ranks the pool by one dense signal, ties in source order.
pub fn rank_dense(
    kind: ScorerKind,
    record: &QuestionRecord,
    table: &ScoreTable,
) -> Result<Ranking, ScorerError> {
    let scores = table.scores_for(kind, record)?;
    Ok(
        Ranking::from_scores(&record.question_id, kind.strategy().as_str(), &record.candidates, &scores)
            .expect("table scores are finite and match the pool"),
    )
}
