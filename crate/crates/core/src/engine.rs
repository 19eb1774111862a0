//! Per-question pipeline: base signals, then the selected strategy.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateSentence, Dataset, QuestionRecord};
use crate::entities::{EntityError, EntityIndex, NerProvider, RuleNer};
use crate::eval::BaseRankings;
use crate::fusion::{average_rank, build_pair_sets, ear_rank, simcom, BestPair, FusionConfig, FusionError};
use crate::ranking::{Ranking, Strategy};
use crate::scorer::{rank_dense, score_pool, Provenance, ScoreTable, Scorer, ScorerError, ScorerKind};
use crate::sparse::{Bm25Params, SparseError, SparseIndex};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("question {question_id}: {source}")]
    Sparse { question_id: String, source: SparseError },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("question {question_id}: entity extraction failed: {source}")]
    Entities { question_id: String, source: EntityError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionOutcome {
    pub ranking: Ranking,
    pub pairs_scored: usize,
    pub fallback: bool,
    pub best_pair: Option<BestPair>,
}

impl QuestionOutcome {
    fn plain(ranking: Ranking) -> Self {
        QuestionOutcome {
            ranking,
            pairs_scored: 0,
            fallback: false,
            best_pair: None,
        }
    }
}

/// Aggregate facts about a dataset-level run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub questions: usize,
    pub fallbacks: usize,
    pub mean_pairs_scored: f64,
    pub entity_sharing_best_pairs: usize,
}

impl RunSummary {
    pub fn of(outcomes: &[QuestionOutcome]) -> Self {
        let n = outcomes.len();
        RunSummary {
            questions: n,
            fallbacks: outcomes.iter().filter(|o| o.fallback).count(),
            mean_pairs_scored: if n == 0 {
                0.0
            } else {
                outcomes.iter().map(|o| o.pairs_scored).sum::<usize>() as f64 / n as f64
            },
            entity_sharing_best_pairs: outcomes
                .iter()
                .filter(|o| o.best_pair.as_ref().is_some_and(|b| b.shares_entity))
                .count(),
        }
    }
}

pub struct Engine {
    scorer: Scorer,
    bm25: Bm25Params,
    ner: Box<dyn NerProvider>,
    fuzzy_threshold: f64,
}

impl Engine {
    pub fn new(scorer: Scorer, bm25: Bm25Params, ner: Box<dyn NerProvider>, fuzzy_threshold: f64) -> Self {
        Engine {
            scorer,
            bm25,
            ner,
            fuzzy_threshold,
        }
    }

    /// Proxy scorer, default BM25 and the rule-based NER.
    pub fn proxy() -> Self {
        Engine::new(
            Scorer::proxy(),
            Bm25Params::default(),
            Box::new(RuleNer),
            crate::entities::DEFAULT_FUZZY_THRESHOLD,
        )
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn ner_name(&self) -> &str {
        self.ner.name()
    }

    /// Provenance of dense scores seen so far: `cache` when every score was
    /// replayed, otherwise the backend's own.
    pub fn provenance(&self) -> Provenance {
        if self.scorer.cache().is_some() && self.scorer.backend_calls() == 0 {
            Provenance::Cache
        } else {
            self.scorer.provenance()
        }
    }

    fn sparse(&self, record: &QuestionRecord) -> Result<(Vec<f64>, Ranking), EngineError> {
        let index = SparseIndex::build(&record.candidates, self.bm25).map_err(|source| EngineError::Sparse {
            question_id: record.question_id.clone(),
            source,
        })?;
        let scores = index.score_all(&record.question_text);
        let ranking = Ranking::from_scores(
            &record.question_id,
            Strategy::Bm25.as_str(),
            &record.candidates,
            &scores,
        )
        .map_err(FusionError::from)?;
        Ok((scores, ranking))
    }

    fn table(&self, record: &QuestionRecord, kinds: &[ScorerKind]) -> Result<ScoreTable, EngineError> {
        let mut table = ScoreTable::new(&record.question_id);
        for &kind in kinds {
            if !table.is_complete(kind, record) {
                table.merge(score_pool(&self.scorer, kind, record)?);
            }
        }
        Ok(table)
    }

    pub fn base_rankings(&self, record: &QuestionRecord) -> Result<BaseRankings, EngineError> {
        let (_, bm25) = self.sparse(record)?;
        let table = self.table(record, &[ScorerKind::Sts, ScorerKind::Is])?;
        Ok(BaseRankings {
            bm25,
            sts: rank_dense(ScorerKind::Sts, record, &table)?,
            is: rank_dense(ScorerKind::Is, record, &table)?,
        })
    }

    /// Ranks one question. For `ear`/`earnest` the strategy decides
    /// `nest_enabled`, overriding `fusion`.
    pub fn rank_question(
        &self,
        strategy: Strategy,
        record: &QuestionRecord,
        fusion: &FusionConfig,
    ) -> Result<QuestionOutcome, EngineError> {
        fusion.validate()?;
        let pool = &record.candidates;
        match strategy {
            Strategy::Bm25 => Ok(QuestionOutcome::plain(self.sparse(record)?.1)),
            Strategy::Sts | Strategy::Is => {
                let kind = if strategy == Strategy::Sts { ScorerKind::Sts } else { ScorerKind::Is };
                let table = self.table(record, &[kind])?;
                Ok(QuestionOutcome::plain(rank_dense(kind, record, &table)?))
            }
            Strategy::Ar => {
                let b = self.base_rankings(record)?;
                Ok(QuestionOutcome::plain(average_rank(&record.question_id, pool, &[b.bm25, b.sts, b.is])?))
            }
            Strategy::Simcom => {
                let (sparse, _) = self.sparse(record)?;
                let table = self.table(record, &[ScorerKind::Sts, ScorerKind::Is])?;
                Ok(QuestionOutcome::plain(simcom(record, &table, &sparse, fusion)?))
            }
            Strategy::Ear | Strategy::Earnest => {
                let cfg = FusionConfig {
                    nest_enabled: strategy == Strategy::Earnest,
                    ..fusion.clone()
                };
                let (_, bm25) = self.sparse(record)?;
                let table = self.table(record, &[ScorerKind::Sts, cfg.set_b_ranker, cfg.initial_ranker])?;
                let sts = rank_dense(ScorerKind::Sts, record, &table)?;
                let set_b = rank_dense(cfg.set_b_ranker, record, &table)?;
                let sets = build_pair_sets(pool, &bm25, &sts, &set_b, cfg.k)?;
                let out = if cfg.nest_enabled {
                    let index = EntityIndex::build(pool, self.ner.as_ref(), self.fuzzy_threshold).map_err(|source| {
                        EngineError::Entities {
                            question_id: record.question_id.clone(),
                            source,
                        }
                    })?;
                    let shares = |a: &CandidateSentence, b: &CandidateSentence| {
                        index.share_entity(&a.candidate_id, &b.candidate_id)
                    };
                    ear_rank(record, &table, &sets, &cfg, &self.scorer, &shares)?
                } else {
                    ear_rank(record, &table, &sets, &cfg, &self.scorer, &|_, _| false)?
                };
                Ok(QuestionOutcome {
                    ranking: out.ranking,
                    pairs_scored: out.pairs_scored,
                    fallback: out.fallback,
                    best_pair: out.best_pair,
                })
            }
        }
    }

    /// Ranks every question in parallel; output keeps dataset order and the
    /// first failing question (in dataset order) determines the error.
    pub fn rank_dataset(
        &self,
        strategy: Strategy,
        dataset: &Dataset,
        fusion: &FusionConfig,
    ) -> Result<Vec<QuestionOutcome>, EngineError> {
        let results: Vec<Result<QuestionOutcome, EngineError>> = dataset
            .questions
            .par_iter()
            .map(|q| self.rank_question(strategy, q, fusion))
            .collect();
        results.into_iter().collect()
    }

    pub fn base_rankings_dataset(&self, dataset: &Dataset) -> Result<BTreeMap<String, BaseRankings>, EngineError> {
        let results: Vec<Result<(String, BaseRankings), EngineError>> = dataset
            .questions
            .par_iter()
            .map(|q| Ok((q.question_id.clone(), self.base_rankings(q)?)))
            .collect();
        results.into_iter().collect()
    }

    /// Scores the whole dataset under both dense scorers, filling the cache.
    pub fn warm(&self, dataset: &Dataset) -> Result<usize, EngineError> {
        let results: Vec<Result<usize, ScorerError>> = dataset
            .questions
            .par_iter()
            .map(|q| {
                score_pool(&self.scorer, ScorerKind::Sts, q)?;
                score_pool(&self.scorer, ScorerKind::Is, q)?;
                Ok(2 * q.candidates.len())
            })
            .collect();
        Ok(results.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().sum())
    }
}
