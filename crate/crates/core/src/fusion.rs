//! Ensemble strategies over the three base signals.
//!
//! * Average Ranking: sort by the sum of 1-based base ranks.
//! * SimCom: weighted mean of L2-normalized BM25/STS/IS scores, with the
//!   BM25 term dropped (and the divisor lowered to 2) when BM25 is zero.
//! * EAR: score every `a ∥ b` pair from the Cartesian product of the
//!   similarity set A and the inference set B, put the best pair on top and
//!   rank the rest against the question augmented with that pair.
//! * EARnest: EAR with pair scores doubled when the two sentences share a
//!   named entity.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateId, CandidateSentence, QuestionRecord};
use crate::ranking::{RankedCandidate, Ranking, RankingError, Strategy};
use crate::scorer::{augmented_key, pair_key, ScoreItem, ScoreTable, Scorer, ScorerError, ScorerKind};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("rankings for {question_id} do not cover the same pool: {detail}")]
    MismatchedPools { question_id: String, detail: String },
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} sparse scores, got {got}")]
    SparseLength { expected: usize, got: usize },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// Which sentence of a pair comes first in the concatenated passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrder {
    /// Similarity-set sentence, then inference-set sentence.
    #[default]
    AThenB,
    BThenA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Top-K cut used to build sets A and B.
    pub k: usize,
    pub nest_enabled: bool,
    /// Scorer used for pair scoring and the residual ranking.
    pub initial_ranker: ScorerKind,
    /// Signal whose top-K forms set B. `sts` reproduces the
    /// inference-model ablation.
    pub set_b_ranker: ScorerKind,
    pub pair_order: PairOrder,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            alpha: 3.0,
            beta: 1.0,
            k: 3,
            nest_enabled: false,
            initial_ranker: ScorerKind::Sts,
            set_b_ranker: ScorerKind::Is,
            pair_order: PairOrder::AThenB,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FusionError::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(FusionError::InvalidConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.k == 0 {
            return Err(FusionError::InvalidConfig("k must be >= 1".into()));
        }
        Ok(())
    }
}

fn source_index(pool: &[CandidateSentence]) -> HashMap<&CandidateId, usize> {
    pool.iter().enumerate().map(|(i, c)| (&c.candidate_id, i)).collect()
}

fn check_covers(question_id: &str, pool: &[CandidateSentence], r: &Ranking) -> Result<(), FusionError> {
    let ids: HashSet<&CandidateId> = pool.iter().map(|c| &c.candidate_id).collect();
    let got: HashSet<&CandidateId> = r.ids().collect();
    if got.len() != r.len() || got != ids {
        return Err(FusionError::MismatchedPools {
            question_id: question_id.to_string(),
            detail: format!("{} ranking has {} of {} pool members", r.strategy, got.intersection(&ids).count(), ids.len()),
        });
    }
    Ok(())
}

/// Sums 1-based ranks across `rankings`. Output is ascending by rank sum,
/// then best single rank, then source order; each score is the negated
/// rank sum.
pub fn average_rank(
    question_id: &str,
    pool: &[CandidateSentence],
    rankings: &[Ranking],
) -> Result<Ranking, FusionError> {
    if rankings.is_empty() {
        return Err(FusionError::MismatchedPools {
            question_id: question_id.to_string(),
            detail: "no input rankings".into(),
        });
    }
    for r in rankings {
        check_covers(question_id, pool, r)?;
    }
    let positions: Vec<HashMap<&CandidateId, usize>> = rankings.iter().map(Ranking::positions).collect();
    let mut rows: Vec<(usize, usize, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let ranks = positions.iter().map(|p| p[&c.candidate_id]);
            let sum = ranks.clone().sum();
            let best = ranks.min().expect("at least one ranking");
            (sum, best, i)
        })
        .collect();
    rows.sort();
    Ok(Ranking {
        question_id: question_id.to_string(),
        strategy: Strategy::Ar.as_str().to_string(),
        ranked: rows
            .into_iter()
            .map(|(sum, _, i)| RankedCandidate {
                candidate_id: pool[i].candidate_id.clone(),
                score: -(sum as f64),
            })
            .collect(),
    })
}

/// Divides by the Euclidean norm; an all-zero vector passes through.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let norm = scores.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm == 0.0 {
        scores.to_vec()
    } else {
        scores.iter().map(|s| s / norm).collect()
    }
}

/// Question-evidence relevance for every candidate, in pool order.
pub fn qer_scores(sparse: &[f64], sts: &[f64], is: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let (nb, ns, ni) = (normalize_scores(sparse), normalize_scores(sts), normalize_scores(is));
    (0..sparse.len())
        .map(|j| {
            if sparse[j] > 0.0 {
                (nb[j] + alpha * ns[j] + beta * ni[j]) / 3.0
            } else {
                (alpha * ns[j] + beta * ni[j]) / 2.0
            }
        })
        .collect()
}

pub fn simcom(
    record: &QuestionRecord,
    table: &ScoreTable,
    sparse_scores: &[f64],
    cfg: &FusionConfig,
) -> Result<Ranking, FusionError> {
    if sparse_scores.len() != record.candidates.len() {
        return Err(FusionError::SparseLength {
            expected: record.candidates.len(),
            got: sparse_scores.len(),
        });
    }
    let sts = table.scores_for(ScorerKind::Sts, record)?;
    let is = table.scores_for(ScorerKind::Is, record)?;
    let qer = qer_scores(sparse_scores, &sts, &is, cfg.alpha, cfg.beta);
    Ok(Ranking::from_scores(&record.question_id, Strategy::Simcom.as_str(), &record.candidates, &qer)?)
}

/// Sets A (similarity) and B (inference) for pair construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSets {
    pub a: Vec<CandidateId>,
    pub b: Vec<CandidateId>,
}

impl PairSets {
    /// `A × B` without self-pairs, in A-major order.
    pub fn pairs(&self) -> Vec<(CandidateId, CandidateId)> {
        self.a
            .iter()
            .flat_map(|a| self.b.iter().filter(move |b| *b != a).map(move |b| (a.clone(), b.clone())))
            .collect()
    }

    pub fn pair_count(&self) -> usize {
        self.a.iter().map(|a| self.b.iter().filter(|b| *b != a).count()).sum()
    }
}

/// A = top-K(BM25) ∪ top-K(STS), ordered by best contributing rank then
/// source order; B = top-K of `rank_b`. K beyond the pool truncates.
pub fn build_pair_sets(
    pool: &[CandidateSentence],
    rank_bm25: &Ranking,
    rank_sts: &Ranking,
    rank_b: &Ranking,
    k: usize,
) -> Result<PairSets, FusionError> {
    if k == 0 {
        return Err(FusionError::InvalidConfig("k must be >= 1".into()));
    }
    let qid = rank_bm25.question_id.as_str();
    for r in [rank_bm25, rank_sts, rank_b] {
        check_covers(qid, pool, r)?;
    }
    let src = source_index(pool);
    let mut best: HashMap<&CandidateId, usize> = HashMap::new();
    for r in [rank_bm25, rank_sts] {
        for (pos, rc) in r.top(k).iter().enumerate() {
            best.entry(&rc.candidate_id)
                .and_modify(|b| *b = (*b).min(pos))
                .or_insert(pos);
        }
    }
    let mut a: Vec<&CandidateId> = best.keys().copied().collect();
    a.sort_by_key(|id| (best[id], src[id]));
    Ok(PairSets {
        a: a.into_iter().cloned().collect(),
        b: rank_b.top(k).iter().map(|r| r.candidate_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPair {
    pub a: CandidateId,
    pub b: CandidateId,
    pub score: f64,
    pub shares_entity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarOutcome {
    pub ranking: Ranking,
    pub pairs_scored: usize,
    pub best_pair: Option<BestPair>,
    /// True when A × B had no usable pair and the initial ranker's own
    /// ranking was returned.
    pub fallback: bool,
}

fn joined(first: &str, second: &str) -> String {
    format!("{first} {second}")
}

/// Pair text in configured order, and the ids in that same order.
fn ordered<'a>(
    cfg: &FusionConfig,
    a: &'a CandidateSentence,
    b: &'a CandidateSentence,
) -> (&'a CandidateSentence, &'a CandidateSentence) {
    match cfg.pair_order {
        PairOrder::AThenB => (a, b),
        PairOrder::BThenA => (b, a),
    }
}

/// `(1 + NEST) · Sim(q, a ∥ b)` for a single pair.
#[allow(clippy::too_many_arguments)]
pub fn earnest_pair_score(
    question_id: &str,
    question: &str,
    a: &CandidateSentence,
    b: &CandidateSentence,
    cfg: &FusionConfig,
    scorer: &Scorer,
    shares_entity: &dyn Fn(&CandidateSentence, &CandidateSentence) -> bool,
) -> Result<f64, FusionError> {
    let (first, second) = ordered(cfg, a, b);
    let key = pair_key(&first.candidate_id, &second.candidate_id);
    let passage = joined(&first.text, &second.text);
    let sim = scorer.score(
        cfg.initial_ranker,
        ScoreItem {
            question_id,
            key: &key,
            query: question,
            passage: &passage,
        },
    )?;
    let nest = if shares_entity(a, b) { 1.0 } else { 0.0 };
    Ok((1.0 + nest) * sim)
}

/// Entailment-aware ranking. With `cfg.nest_enabled` the pair scores use
/// the EARnest promotion via `shares_entity`; otherwise it is never called.
pub fn ear_rank(
    record: &QuestionRecord,
    table: &ScoreTable,
    sets: &PairSets,
    cfg: &FusionConfig,
    scorer: &Scorer,
    shares_entity: &dyn Fn(&CandidateSentence, &CandidateSentence) -> bool,
) -> Result<EarOutcome, FusionError> {
    cfg.validate()?;
    let pool = &record.candidates;
    let qid = record.question_id.as_str();
    let strategy = if cfg.nest_enabled { Strategy::Earnest } else { Strategy::Ear };
    let by_id: HashMap<&CandidateId, &CandidateSentence> = pool.iter().map(|c| (&c.candidate_id, c)).collect();
    let src = source_index(pool);
    let lookup = |id: &CandidateId| -> Result<&CandidateSentence, FusionError> {
        by_id.get(id).copied().ok_or_else(|| FusionError::MismatchedPools {
            question_id: qid.to_string(),
            detail: format!("pair set member {id} is not in the pool"),
        })
    };
    let individual = table.scores_for(cfg.initial_ranker, record)?;

    let pairs = sets.pairs();
    if pairs.is_empty() {
        let mut ranking = Ranking::from_scores(qid, strategy.as_str(), pool, &individual)?;
        ranking.strategy = strategy.as_str().to_string();
        return Ok(EarOutcome {
            ranking,
            pairs_scored: 0,
            best_pair: None,
            fallback: true,
        });
    }

    // (1) score every pair in one batch
    let mut texts = Vec::with_capacity(pairs.len());
    for (a, b) in &pairs {
        let (sa, sb) = (lookup(a)?, lookup(b)?);
        let (first, second) = ordered(cfg, sa, sb);
        texts.push((
            pair_key(&first.candidate_id, &second.candidate_id),
            joined(&first.text, &second.text),
        ));
    }
    let items: Vec<ScoreItem<'_>> = texts
        .iter()
        .map(|(key, passage)| ScoreItem {
            question_id: qid,
            key,
            query: &record.question_text,
            passage,
        })
        .collect();
    let (sims, _) = scorer.score_items(cfg.initial_ranker, &items)?;

    // (2) argmax, ties by (a, b) source order
    let mut best: Option<(f64, usize, usize, usize, bool)> = None;
    for (i, ((a, b), sim)) in pairs.iter().zip(&sims).enumerate() {
        let shared = cfg.nest_enabled && shares_entity(lookup(a)?, lookup(b)?);
        let score = if shared { 2.0 * sim } else { *sim };
        let (ia, ib) = (src[a], src[b]);
        let better = match best {
            None => true,
            Some((bs, ba, bb, _, _)) => score > bs || (score == bs && (ia, ib) < (ba, bb)),
        };
        if better {
            best = Some((score, ia, ib, i, shared));
        }
    }
    let (best_score, _, _, best_i, shared) = best.expect("pairs is non-empty");
    let (pa, pb) = &pairs[best_i];
    let (ia, ib) = (src[pa], src[pb]);

    // order within the pair by individual initial-ranker score
    let (top, second) = if individual[ib] > individual[ia] || (individual[ib] == individual[ia] && ib < ia) {
        (ib, ia)
    } else {
        (ia, ib)
    };

    // (3) residual ranking against q ∥ pair
    let (first_txt, second_txt) = ordered(cfg, &pool[ia], &pool[ib]);
    let augmented = joined(&record.question_text, &joined(&first_txt.text, &second_txt.text));
    let rest: Vec<usize> = (0..pool.len()).filter(|&i| i != ia && i != ib).collect();
    let keys: Vec<String> = rest
        .iter()
        .map(|&i| augmented_key(&first_txt.candidate_id, &second_txt.candidate_id, &pool[i].candidate_id))
        .collect();
    let items: Vec<ScoreItem<'_>> = rest
        .iter()
        .zip(&keys)
        .map(|(&i, key)| ScoreItem {
            question_id: qid,
            key,
            query: &augmented,
            passage: &pool[i].text,
        })
        .collect();
    let (rest_scores, _) = if items.is_empty() {
        (Vec::new(), true)
    } else {
        scorer.score_items(cfg.initial_ranker, &items)?
    };
    let mut rest_order: Vec<usize> = (0..rest.len()).collect();
    rest_order.sort_by(|&x, &y| rest_scores[y].total_cmp(&rest_scores[x]));

    // Pair members carry 2 + their individual score so the list stays
    // non-increasing above residual scores in [0, 1].
    let mut ranked = vec![
        RankedCandidate {
            candidate_id: pool[top].candidate_id.clone(),
            score: 2.0 + individual[top],
        },
        RankedCandidate {
            candidate_id: pool[second].candidate_id.clone(),
            score: 2.0 + individual[second],
        },
    ];
    ranked.extend(rest_order.into_iter().map(|x| RankedCandidate {
        candidate_id: pool[rest[x]].candidate_id.clone(),
        score: rest_scores[x],
    }));

    Ok(EarOutcome {
        ranking: Ranking {
            question_id: qid.to_string(),
            strategy: strategy.as_str().to_string(),
            ranked,
        },
        pairs_scored: pairs.len(),
        best_pair: Some(BestPair {
            a: pa.clone(),
            b: pb.clone(),
            score: best_score,
            shares_entity: shared,
        }),
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QuestionType;
    use crate::scorer::testing::FixedBackend;
    use crate::scorer::{rank_dense, score_pool};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, Just};
    use proptest::strategy::Strategy as _;
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn record(n: usize) -> QuestionRecord {
        QuestionRecord {
            question_id: "q".into(),
            question_text: "question".into(),
            question_type: QuestionType::Bridge,
            candidates: (0..n)
                .map(|i| CandidateSentence::new("q", "T", i, &format!("s{i}")))
                .collect(),
            gold_facts: BTreeSet::new(),
            answer: None,
        }
    }

    fn ranking_from_ranks(r: &QuestionRecord, ranks: &[usize], tag: &str) -> Ranking {
        let mut order: Vec<usize> = (0..ranks.len()).collect();
        order.sort_by_key(|&i| ranks[i]);
        Ranking {
            question_id: r.question_id.clone(),
            strategy: tag.into(),
            ranked: order
                .iter()
                .enumerate()
                .map(|(pos, &i)| RankedCandidate {
                    candidate_id: r.candidates[i].candidate_id.clone(),
                    score: -(pos as f64),
                })
                .collect(),
        }
    }

    fn src_positions(r: &QuestionRecord, ranking: &Ranking) -> Vec<usize> {
        ranking.ids().map(|id| r.candidates.iter().position(|c| &c.candidate_id == id).unwrap()).collect()
    }

    #[test]
    fn table2_average_ranking() {
        let r = record(6);
        let bm25 = ranking_from_ranks(&r, &[1, 4, 3, 5, 6, 2], "bm25");
        let sts = ranking_from_ranks(&r, &[1, 3, 4, 6, 5, 2], "sts");
        let is = ranking_from_ranks(&r, &[5, 2, 6, 3, 1, 4], "is");
        let ar = average_rank("q", &r.candidates, &[bm25, sts, is]).unwrap();
        assert_eq!(src_positions(&r, &ar), vec![0, 5, 1, 4, 2, 3]);
        let sums: Vec<f64> = ar.ranked.iter().map(|x| -x.score).collect();
        assert_eq!(sums, vec![7.0, 8.0, 9.0, 12.0, 13.0, 14.0]);
        ar.validate(&r.candidates).unwrap();
    }

    #[test]
    fn single_ranking_passes_through() {
        let r = record(4);
        let one = ranking_from_ranks(&r, &[2, 4, 1, 3], "bm25");
        let ar = average_rank("q", &r.candidates, std::slice::from_ref(&one)).unwrap();
        assert_eq!(src_positions(&r, &ar), src_positions(&r, &one));
    }

    #[test]
    fn reversed_rankings_tie_and_fall_back() {
        // ranks (1,4),(2,3),(3,2),(4,1): every sum is 5; best single ranks
        // are 1,2,2,1 → order s0, s3 (best 1, source), s1, s2.
        let r = record(4);
        let fwd = ranking_from_ranks(&r, &[1, 2, 3, 4], "a");
        let rev = ranking_from_ranks(&r, &[4, 3, 2, 1], "b");
        let ar = average_rank("q", &r.candidates, &[fwd, rev]).unwrap();
        assert_eq!(src_positions(&r, &ar), vec![0, 3, 1, 2]);
        assert!(ar.ranked.iter().all(|x| x.score == -5.0));
    }

    #[test]
    fn mismatched_pools_error() {
        let r = record(4);
        let mut short = ranking_from_ranks(&r, &[1, 2, 3, 4], "a");
        short.ranked.pop();
        let full = ranking_from_ranks(&r, &[1, 2, 3, 4], "b");
        assert!(matches!(
            average_rank("q", &r.candidates, &[full, short]),
            Err(FusionError::MismatchedPools { .. })
        ));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_scores(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(normalize_scores(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn normalization_is_scale_invariant(
            v in proptest::collection::vec(-100.0f64..100.0, 1..20),
            c in 0.001f64..1000.0,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            for (a, b) in normalize_scores(&v).iter().zip(normalize_scores(&scaled)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qer_zero_bm25_branch() {
        // normalized STS 0.6 and IS 0.2 for the candidate under test: raw
        // vectors [0.6, 0.8] and [0.2, x] with |IS| = 1 → x = sqrt(0.96).
        let q = qer_scores(&[0.0, 1.0], &[0.6, 0.8], &[0.2, 0.96f64.sqrt()], 3.0, 1.0);
        assert!((q[0] - 1.0).abs() < 1e-12);
    }

    fn fixed_backend(entries: &[(ScorerKind, &str, f64)]) -> FixedBackend {
        let mut b = FixedBackend::default();
        for (k, key, v) in entries {
            b.scores.insert((*k, key.to_string()), *v);
        }
        b
    }

    #[test]
    fn simcom_requires_complete_tables() {
        let r = record(2);
        let table = ScoreTable::new("q");
        assert!(matches!(
            simcom(&r, &table, &[0.0, 0.0], &FusionConfig::default()),
            Err(FusionError::Scorer(ScorerError::Incomplete { .. }))
        ));
        assert!(matches!(
            simcom(&r, &table, &[0.0], &FusionConfig::default()),
            Err(FusionError::SparseLength { .. })
        ));
    }

    #[test]
    fn pair_set_sizes() {
        let r = record(8);
        // BM25 top-3 {0,1,2}, STS top-3 {1,2,3}: overlap 2 → |A| = 4
        let bm25 = ranking_from_ranks(&r, &[1, 2, 3, 4, 5, 6, 7, 8], "bm25");
        let sts = ranking_from_ranks(&r, &[8, 1, 2, 3, 4, 5, 6, 7], "sts");
        let is = ranking_from_ranks(&r, &[8, 7, 6, 5, 1, 2, 3, 4], "is");
        let sets = build_pair_sets(&r.candidates, &bm25, &sts, &is, 3).unwrap();
        assert_eq!(sets.a.len(), 4);
        assert_eq!(sets.b.len(), 3);
        assert_eq!(sets.pair_count(), 12);
        // A ordered by best contributing rank then source: s0,s1 (rank 1), s2 (rank 2)...
        let a_src: Vec<usize> = sets.a.iter().map(|id| r.candidates.iter().position(|c| &c.candidate_id == id).unwrap()).collect();
        assert_eq!(a_src, vec![0, 1, 2, 3]);

        let sts_disjoint = ranking_from_ranks(&r, &[8, 7, 6, 1, 2, 3, 4, 5], "sts");
        let is2 = ranking_from_ranks(&r, &[8, 7, 6, 5, 4, 1, 2, 3], "is");
        let sets = build_pair_sets(&r.candidates, &bm25, &sts_disjoint, &is2, 3).unwrap();
        assert_eq!(sets.a.len(), 6);
        // B = {5,6,7}; overlaps A at 3 ids {5}? A = {0,1,2,3,4,5}
        assert_eq!(sets.b.len(), 3);

        let sets = build_pair_sets(&r.candidates, &bm25, &sts, &is, 1).unwrap();
        assert_eq!((sets.a.len(), sets.b.len()), (2, 1));
        let sets = build_pair_sets(&r.candidates, &bm25, &bm25, &is, 1).unwrap();
        assert_eq!((sets.a.len(), sets.b.len()), (1, 1));

        let sets = build_pair_sets(&r.candidates, &bm25, &sts, &is, 50).unwrap();
        assert_eq!((sets.a.len(), sets.b.len()), (8, 8));
        assert!(build_pair_sets(&r.candidates, &bm25, &sts, &is, 0).is_err());
    }

    fn brute_pair_count(a: &[CandidateId], b: &[CandidateId]) -> usize {
        let mut n = 0;
        for x in a {
            for y in b {
                if x != y {
                    n += 1;
                }
            }
        }
        n
    }

    proptest! {
        #[test]
        fn pair_enumeration_matches_brute_force(
            perm_a in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(),
            perm_b in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(),
            perm_c in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(),
            k in 1usize..6,
        ) {
            let r = record(10);
            let to_ranks = |perm: &[usize]| {
                let mut ranks = vec![0; perm.len()];
                for (pos, &i) in perm.iter().enumerate() { ranks[i] = pos + 1; }
                ranks
            };
            let bm25 = ranking_from_ranks(&r, &to_ranks(&perm_a), "bm25");
            let sts = ranking_from_ranks(&r, &to_ranks(&perm_b), "sts");
            let is = ranking_from_ranks(&r, &to_ranks(&perm_c), "is");
            let sets = build_pair_sets(&r.candidates, &bm25, &sts, &is, k).unwrap();
            prop_assert!(sets.a.len() >= k && sets.a.len() <= 2 * k);
            prop_assert_eq!(sets.b.len(), k);
            let pairs = sets.pairs();
            prop_assert_eq!(pairs.len(), brute_pair_count(&sets.a, &sets.b));
            prop_assert_eq!(pairs.len(), sets.pair_count());
            prop_assert!(pairs.iter().all(|(a, b)| a != b));
        }
    }

    fn never(_: &CandidateSentence, _: &CandidateSentence) -> bool {
        false
    }

    fn always(_: &CandidateSentence, _: &CandidateSentence) -> bool {
        true
    }

    /// Fixture: 5 candidates, pair (s1, s3) uniquely best.
    fn ear_fixture() -> (QuestionRecord, Scorer, ScoreTable) {
        let r = record(5);
        let id = |i: usize| r.candidates[i].candidate_id.clone();
        let mut entries = vec![
            (ScorerKind::Sts, id(0).to_string(), 0.9),
            (ScorerKind::Sts, id(1).to_string(), 0.3),
            (ScorerKind::Sts, id(2).to_string(), 0.2),
            (ScorerKind::Sts, id(3).to_string(), 0.6),
            (ScorerKind::Sts, id(4).to_string(), 0.1),
        ];
        for a in 0..5 {
            for b in 0..5 {
                let v = if (a, b) == (1, 3) { 0.8 } else { 0.1 + 0.01 * (a + b) as f64 };
                entries.push((ScorerKind::Sts, pair_key(&id(a), &id(b)), v));
            }
        }
        for c in [0, 2, 4] {
            entries.push((ScorerKind::Sts, augmented_key(&id(1), &id(3), &id(c)), [0.2, 0.0, 0.7, 0.0, 0.5][c]));
        }
        let backend = FixedBackend {
            scores: entries.into_iter().map(|(k, key, v)| ((k, key), v)).collect(),
            ..Default::default()
        };
        let scorer = Scorer::new(Arc::new(backend));
        let table = score_pool(&scorer, ScorerKind::Sts, &r).unwrap();
        (r, scorer, table)
    }

    #[test]
    fn ear_puts_best_pair_on_top_then_residual() {
        let (r, scorer, table) = ear_fixture();
        let id = |i: usize| r.candidates[i].candidate_id.clone();
        let sets = PairSets {
            a: vec![id(0), id(1)],
            b: vec![id(3), id(4)],
        };
        let out = ear_rank(&r, &table, &sets, &FusionConfig::default(), &scorer, &never).unwrap();
        assert_eq!(out.pairs_scored, 4);
        assert!(!out.fallback);
        let best = out.best_pair.as_ref().unwrap();
        assert_eq!((best.a.clone(), best.b.clone()), (id(1), id(3)));
        // s3 (individual 0.6) before s1 (0.3); residual by augmented score: s2 0.7, s4 0.5, s0 0.2
        assert_eq!(src_positions(&r, &out.ranking), vec![3, 1, 2, 4, 0]);
        out.ranking.validate(&r.candidates).unwrap();
        assert_eq!(out.ranking.strategy, "ear");
    }

    #[test]
    fn ear_pair_argmax_matches_exhaustive_enumeration() {
        let (r, scorer, table) = ear_fixture();
        let all: Vec<CandidateId> = r.candidates.iter().map(|c| c.candidate_id.clone()).collect();
        let sets = PairSets { a: all.clone(), b: all.clone() };
        let out = ear_rank(&r, &table, &sets, &FusionConfig::default(), &scorer, &never).unwrap();
        assert_eq!(out.pairs_scored, 20);
        let mut oracle_best = (f64::MIN, 0, 0);
        for a in 0..5 {
            for b in 0..5 {
                if a == b {
                    continue;
                }
                let v = if (a, b) == (1, 3) { 0.8 } else { 0.1 + 0.01 * (a + b) as f64 };
                if v > oracle_best.0 {
                    oracle_best = (v, a, b);
                }
            }
        }
        let best = out.best_pair.unwrap();
        assert_eq!((best.a, best.b), (all[oracle_best.1].clone(), all[oracle_best.2].clone()));
    }

    #[test]
    fn degenerate_sets_fall_back_to_initial_ranker() {
        let (r, scorer, table) = ear_fixture();
        let id = r.candidates[0].candidate_id.clone();
        let sets = PairSets { a: vec![id.clone()], b: vec![id] };
        let out = ear_rank(&r, &table, &sets, &FusionConfig::default(), &scorer, &never).unwrap();
        assert!(out.fallback);
        let dense = rank_dense(ScorerKind::Sts, &r, &table).unwrap();
        assert_eq!(out.ranking.ranked, dense.ranked);
    }

    #[test]
    fn nest_doubles_pair_scores() {
        let r = record(2);
        let (a, b) = (&r.candidates[0], &r.candidates[1]);
        let backend = fixed_backend(&[(ScorerKind::Sts, &pair_key(&a.candidate_id, &b.candidate_id), 0.4)]);
        let scorer = Scorer::new(Arc::new(backend));
        let cfg = FusionConfig::default();
        let with = earnest_pair_score("q", "question", a, b, &cfg, &scorer, &always).unwrap();
        let without = earnest_pair_score("q", "question", a, b, &cfg, &scorer, &never).unwrap();
        assert_eq!(with, 0.8);
        assert_eq!(without, 0.4);
    }

    #[test]
    fn entity_sharing_pair_overtakes_higher_sim_pair() {
        // (s0, s1): Sim 0.6, no shared entity. (s0, s2): Sim 0.35, shared → 0.70.
        let r = record(3);
        let id = |i: usize| r.candidates[i].candidate_id.clone();
        let backend = fixed_backend(&[
            (ScorerKind::Sts, &pair_key(&id(0), &id(1)), 0.6),
            (ScorerKind::Sts, &pair_key(&id(0), &id(2)), 0.35),
        ]);
        let scorer = Scorer::new(Arc::new(backend));
        let table = score_pool(&scorer, ScorerKind::Sts, &r).unwrap();
        let sets = PairSets { a: vec![id(0)], b: vec![id(1), id(2)] };
        let shares = |x: &CandidateSentence, y: &CandidateSentence| {
            let pair = [x.sent_idx, y.sent_idx];
            pair.contains(&0) && pair.contains(&2)
        };
        let ear = ear_rank(&r, &table, &sets, &FusionConfig::default(), &scorer, &shares).unwrap();
        assert_eq!(ear.best_pair.unwrap().b, id(1));
        let cfg = FusionConfig { nest_enabled: true, ..Default::default() };
        let earnest = ear_rank(&r, &table, &sets, &cfg, &scorer, &shares).unwrap();
        let best = earnest.best_pair.unwrap();
        assert_eq!(best.b, id(2));
        assert!((best.score - 0.70).abs() < 1e-12);
        assert!(best.shares_entity);
        assert_eq!(earnest.ranking.strategy, "earnest");
    }

    #[test]
    fn earnest_with_false_predicate_equals_ear() {
        let (r, scorer, table) = ear_fixture();
        let all: Vec<CandidateId> = r.candidates.iter().map(|c| c.candidate_id.clone()).collect();
        let sets = PairSets { a: all[..3].to_vec(), b: all[2..].to_vec() };
        let ear = ear_rank(&r, &table, &sets, &FusionConfig::default(), &scorer, &never).unwrap();
        let cfg = FusionConfig { nest_enabled: true, ..Default::default() };
        let earnest = ear_rank(&r, &table, &sets, &cfg, &scorer, &never).unwrap();
        assert_eq!(ear.ranking.ranked, earnest.ranking.ranked);
    }

    #[test]
    fn one_candidate_b_scores_every_candidate_with_it() {
        let (r, _, _) = ear_fixture();
        let all: Vec<CandidateId> = r.candidates.iter().map(|c| c.candidate_id.clone()).collect();
        let scorer = Scorer::proxy();
        let table = score_pool(&scorer, ScorerKind::Sts, &r).unwrap();
        let sets = PairSets { a: all.clone(), b: vec![all[2].clone()] };
        let before = scorer.pairs_sent();
        let out = ear_rank(&r, &table, &sets, &FusionConfig::default(), &scorer, &never).unwrap();
        assert_eq!(out.pairs_scored, 4);
        // 4 pairs + 3 residual candidates
        assert_eq!(scorer.pairs_sent() - before, 4 + 3);
        let expected: Vec<(CandidateId, CandidateId)> =
            all.iter().filter(|a| **a != all[2]).map(|a| (a.clone(), all[2].clone())).collect();
        assert_eq!(sets.pairs(), expected);
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::default().validate().is_ok());
        assert!(FusionConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(FusionConfig { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(FusionConfig { k: 0, ..Default::default() }.validate().is_err());
        let cfg = FusionConfig { alpha: 2.5, nest_enabled: true, pair_order: PairOrder::BThenA, ..Default::default() };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<FusionConfig>(&text).unwrap(), cfg);
    }
}
