//! The ordered output shared by every ranking strategy.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateId, CandidateSentence};

/// Which strategy produced a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Bm25,
    Sts,
    Is,
    Ar,
    Simcom,
    Ear,
    Earnest,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Bm25,
        Strategy::Sts,
        Strategy::Is,
        Strategy::Ar,
        Strategy::Simcom,
        Strategy::Ear,
        Strategy::Earnest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Bm25 => "bm25",
            Strategy::Sts => "sts",
            Strategy::Is => "is",
            Strategy::Ar => "ar",
            Strategy::Simcom => "simcom",
            Strategy::Ear => "ear",
            Strategy::Earnest => "earnest",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate_id: CandidateId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub question_id: String,
    pub strategy: String,
    pub ranked: Vec<RankedCandidate>,
}

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("ranking for {question_id} is not a permutation of the pool: {detail}")]
    NotPermutation { question_id: String, detail: String },
    #[error("ranking for {question_id} has increasing scores at position {position}")]
    ScoreOrder { question_id: String, position: usize },
    #[error("score vector length {got} does not match pool size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite score for {0}")]
    NonFinite(CandidateId),
}

impl Ranking {
    /// Sorts the pool by descending score; equal scores keep source order.
    pub fn from_scores(
        question_id: &str,
        strategy: impl Into<String>,
        pool: &[CandidateSentence],
        scores: &[f64],
    ) -> Result<Self, RankingError> {
        if pool.len() != scores.len() {
            return Err(RankingError::LengthMismatch {
                expected: pool.len(),
                got: scores.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(RankingError::NonFinite(pool[i].candidate_id.clone()));
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Ok(Ranking {
            question_id: question_id.to_string(),
            strategy: strategy.into(),
            ranked: order
                .into_iter()
                .map(|i| RankedCandidate {
                    candidate_id: pool[i].candidate_id.clone(),
                    score: scores[i],
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &CandidateId> {
        self.ranked.iter().map(|r| &r.candidate_id)
    }

    pub fn top(&self, k: usize) -> &[RankedCandidate] {
        &self.ranked[..k.min(self.ranked.len())]
    }

    /// 1-based rank of every candidate.
    pub fn positions(&self) -> HashMap<&CandidateId, usize> {
        self.ranked
            .iter()
            .enumerate()
            .map(|(i, r)| (&r.candidate_id, i + 1))
            .collect()
    }

    /// Checks the permutation and non-increasing-score invariants against a pool.
    pub fn validate(&self, pool: &[CandidateSentence]) -> Result<(), RankingError> {
        let expected: HashSet<&CandidateId> = pool.iter().map(|c| &c.candidate_id).collect();
        let mut seen = HashSet::new();
        for r in &self.ranked {
            if !expected.contains(&r.candidate_id) {
                return Err(self.not_perm(format!("unknown candidate {}", r.candidate_id)));
            }
            if !seen.insert(&r.candidate_id) {
                return Err(self.not_perm(format!("duplicate candidate {}", r.candidate_id)));
            }
        }
        if seen.len() != expected.len() {
            return Err(self.not_perm(format!(
                "{} of {} candidates present",
                seen.len(),
                expected.len()
            )));
        }
        for (i, w) in self.ranked.windows(2).enumerate() {
            if w[1].score > w[0].score {
                return Err(RankingError::ScoreOrder {
                    question_id: self.question_id.clone(),
                    position: i + 2,
                });
            }
        }
        Ok(())
    }

    fn not_perm(&self, detail: String) -> RankingError {
        RankingError::NotPermutation {
            question_id: self.question_id.clone(),
            detail,
        }
    }
}
