//! Retrieval metrics and the reports built on them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateId, Dataset};
use crate::fusion::{build_pair_sets, FusionError};
use crate::ranking::Ranking;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("question {0} has no gold facts")]
    EmptyGold(String),
    #[error("rankings are missing for {} question(s): {}", .0.len(), preview(.0))]
    MissingRankings(Vec<String>),
    #[error("rankings reference {} question(s) not in the dataset: {}", .0.len(), preview(.0))]
    UnknownQuestions(Vec<String>),
    #[error("duplicate ranking for question {0}")]
    DuplicateRanking(String),
    #[error("no evaluable questions")]
    NoQuestions,
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

fn preview(ids: &[String]) -> String {
    let mut s = ids.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > 10 {
        s.push_str(", ...");
    }
    s
}

fn hits_in_top(ranking: &Ranking, gold: &HashSet<CandidateId>, k: usize) -> usize {
    ranking.top(k).iter().filter(|r| gold.contains(&r.candidate_id)).count()
}

/// `|top-k ∩ gold| / k`. A perfect ranking of a 2-gold question scores
/// 2/5 at k = 5.
pub fn precision_at_k(ranking: &Ranking, gold: &HashSet<CandidateId>, k: usize) -> f64 {
    assert!(k >= 1, "precision_at_k needs k >= 1");
    hits_in_top(ranking, gold, k) as f64 / k as f64
}

pub fn recall_at_k(ranking: &Ranking, gold: &HashSet<CandidateId>, k: usize) -> Result<f64, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold(ranking.question_id.clone()));
    }
    Ok(hits_in_top(ranking, gold, k) as f64 / gold.len() as f64)
}

/// Mean over gold items of the precision at that item's rank, over the
/// whole ranking. Gold items absent from the ranking contribute 0.
pub fn average_precision(ranking: &Ranking, gold: &HashSet<CandidateId>) -> Result<f64, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold(ranking.question_id.clone()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in ranking.ranked.iter().enumerate() {
        if gold.contains(&r.candidate_id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / gold.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuestionMetrics {
    pub p_at_3: f64,
    pub p_at_5: f64,
    pub ap: f64,
    pub r_at_3: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
}

impl QuestionMetrics {
    pub fn compute(ranking: &Ranking, gold: &HashSet<CandidateId>) -> Result<Self, EvalError> {
        Ok(QuestionMetrics {
            p_at_3: precision_at_k(ranking, gold, 3),
            p_at_5: precision_at_k(ranking, gold, 5),
            ap: average_precision(ranking, gold)?,
            r_at_3: recall_at_k(ranking, gold, 3)?,
            r_at_5: recall_at_k(ranking, gold, 5)?,
            r_at_10: recall_at_k(ranking, gold, 10)?,
        })
    }
}

/// One row of the comparison table, macro-averaged over questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub strategy: String,
    pub questions: usize,
    #[serde(rename = "P@3")]
    pub p_at_3: f64,
    #[serde(rename = "P@5")]
    pub p_at_5: f64,
    #[serde(rename = "MAP")]
    pub map: f64,
    #[serde(rename = "R@3")]
    pub r_at_3: f64,
    #[serde(rename = "R@5")]
    pub r_at_5: f64,
    #[serde(rename = "R@10")]
    pub r_at_10: f64,
}

impl StrategyMetrics {
    pub const COLUMNS: [&'static str; 6] = ["P@3", "P@5", "MAP", "R@3", "R@5", "R@10"];

    pub fn values(&self) -> [f64; 6] {
        [self.p_at_3, self.p_at_5, self.map, self.r_at_3, self.r_at_5, self.r_at_10]
    }
}

/// Per-question metrics in dataset order, for questions with gold facts.
pub fn per_question(dataset: &Dataset, rankings: &[Ranking]) -> Result<Vec<(String, QuestionMetrics)>, EvalError> {
    let mut by_id: HashMap<&str, &Ranking> = HashMap::with_capacity(rankings.len());
    for r in rankings {
        if by_id.insert(r.question_id.as_str(), r).is_some() {
            return Err(EvalError::DuplicateRanking(r.question_id.clone()));
        }
    }
    let known: HashSet<&str> = dataset.questions.iter().map(|q| q.question_id.as_str()).collect();
    let mut unknown: Vec<String> = by_id.keys().filter(|id| !known.contains(*id)).map(|s| s.to_string()).collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(EvalError::UnknownQuestions(unknown));
    }
    let missing: Vec<String> = dataset
        .questions
        .iter()
        .filter(|q| !by_id.contains_key(q.question_id.as_str()))
        .map(|q| q.question_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingRankings(missing));
    }
    dataset
        .questions
        .iter()
        .filter(|q| !q.gold_facts.is_empty())
        .map(|q| Ok((q.question_id.clone(), QuestionMetrics::compute(by_id[q.question_id.as_str()], &q.gold_ids())?)))
        .collect()
}

pub fn evaluate_strategy(dataset: &Dataset, strategy: &str, rankings: &[Ranking]) -> Result<StrategyMetrics, EvalError> {
    let rows = per_question(dataset, rankings)?;
    if rows.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&QuestionMetrics) -> f64| rows.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
    Ok(StrategyMetrics {
        strategy: strategy.to_string(),
        questions: rows.len(),
        p_at_3: mean(|m| m.p_at_3),
        p_at_5: mean(|m| m.p_at_5),
        map: mean(|m| m.ap),
        r_at_3: mean(|m| m.r_at_3),
        r_at_5: mean(|m| m.r_at_5),
        r_at_10: mean(|m| m.r_at_10),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub question_count: usize,
    /// Records dropped at ingest because their gold facts did not resolve.
    pub rejected_at_ingest: usize,
    /// Questions left out because they carry no gold facts.
    pub excluded_without_gold: usize,
    pub rows: Vec<StrategyMetrics>,
    pub config: BTreeMap<String, serde_json::Value>,
    pub provenance: BTreeMap<String, BTreeMap<String, String>>,
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn new(dataset: &Dataset, rows: Vec<StrategyMetrics>) -> Self {
        let with_gold = dataset.questions.iter().filter(|q| !q.gold_facts.is_empty()).count();
        MetricsReport {
            question_count: with_gold,
            rejected_at_ingest: dataset.rejections.len(),
            excluded_without_gold: dataset.len() - with_gold,
            rows,
            config: BTreeMap::new(),
            provenance: BTreeMap::new(),
            notes: vec!["AP is computed over the full candidate pool (no depth cut-off)".into()],
        }
    }

    pub fn row(&self, strategy: &str) -> Option<&StrategyMetrics> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    /// Aligned text table, two decimals.
    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.strategy.len()).max().unwrap_or(0).max("strategy".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "questions: {}  (rejected at ingest: {}, without gold: {})",
            self.question_count, self.rejected_at_ingest, self.excluded_without_gold
        );
        let _ = write!(out, "{:<width$}", "strategy");
        for c in StrategyMetrics::COLUMNS {
            let _ = write!(out, "  {c:>5}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.strategy);
            for v in r.values() {
                let _ = write!(out, "  {v:>5.2}");
            }
            out.push('\n');
        }
        for (strategy, prov) in &self.provenance {
            let parts: Vec<String> = prov.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "provenance[{strategy}]: {}", parts.join(" "));
        }
        for (strategy, cfg) in &self.config {
            let _ = writeln!(out, "config[{strategy}]: {cfg}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("strategy,questions,{}\n", StrategyMetrics::COLUMNS.join(","));
        for r in &self.rows {
            let vals: Vec<String> = r.values().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{},{},{}", r.strategy, r.questions, vals.join(","));
        }
        out
    }
}

/// The three base rankings of one question.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRankings {
    pub bm25: Ranking,
    pub sts: Ranking,
    pub is: Ranking,
}

/// `In` = within top-k, `Out` = beyond top-k, `Any` = unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    In,
    Out,
    Any,
}

impl Mark {
    fn symbol(self) -> &'static str {
        match self {
            Mark::In => "✓",
            Mark::Out => "✗",
            Mark::Any => "·",
        }
    }

    fn admits(self, within: bool) -> bool {
        match self {
            Mark::In => within,
            Mark::Out => !within,
            Mark::Any => true,
        }
    }
}

/// Patterns over (BM25, STS, IS).
pub const PATTERNS: [[Mark; 3]; 8] = {
    use Mark::*;
    [
        [In, Out, Out],
        [Out, Out, In],
        [Out, In, Out],
        [Out, In, Any],
        [Out, Any, In],
        [Any, In, Out],
        [Any, Out, In],
        [Out, Out, Out],
    ]
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityRow {
    pub pattern: [Mark; 3],
    /// Percentage per k, aligned with `ComplementarityReport::ks`.
    pub percent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityReport {
    pub question_count: usize,
    pub ks: Vec<usize>,
    pub rows: Vec<ComplementarityRow>,
}

impl ComplementarityReport {
    pub fn render_table(&self) -> String {
        let mut out = String::from("BM25  STS  IS ");
        for k in &self.ks {
            let _ = write!(out, "  %(k={k})");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                " {}     {}    {}  ",
                row.pattern[0].symbol(),
                row.pattern[1].symbol(),
                row.pattern[2].symbol()
            );
            for p in &row.percent {
                let _ = write!(out, "  {p:>7.0}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "questions: {}", self.question_count);
        out
    }
}

fn lookup<'a>(base: &'a HashMap<String, BaseRankings>, dataset: &Dataset) -> Result<Vec<&'a BaseRankings>, EvalError> {
    let missing: Vec<String> = dataset
        .questions
        .iter()
        .filter(|q| !base.contains_key(&q.question_id))
        .map(|q| q.question_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingRankings(missing));
    }
    Ok(dataset.questions.iter().map(|q| &base[&q.question_id]).collect())
}

/// Share of questions having at least one gold sentence whose top-k
/// membership under (BM25, STS, IS) fits each pattern. Uses positions only.
pub fn complementarity(
    dataset: &Dataset,
    base: &HashMap<String, BaseRankings>,
    ks: &[usize],
) -> Result<ComplementarityReport, EvalError> {
    let bases = lookup(base, dataset)?;
    let mut counts = vec![vec![0usize; ks.len()]; PATTERNS.len()];
    let mut n = 0usize;
    for (q, b) in dataset.questions.iter().zip(bases) {
        if q.gold_facts.is_empty() {
            continue;
        }
        n += 1;
        let pos = [b.bm25.positions(), b.sts.positions(), b.is.positions()];
        let gold = q.gold_ids();
        for (ki, &k) in ks.iter().enumerate() {
            let within: Vec<[bool; 3]> = gold
                .iter()
                .map(|g| std::array::from_fn(|m| pos[m].get(g).is_some_and(|&p| p <= k)))
                .collect();
            for (pi, pattern) in PATTERNS.iter().enumerate() {
                if within.iter().any(|w| (0..3).all(|m| pattern[m].admits(w[m]))) {
                    counts[pi][ki] += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(EvalError::NoQuestions);
    }
    Ok(ComplementarityReport {
        question_count: n,
        ks: ks.to_vec(),
        rows: PATTERNS
            .iter()
            .zip(counts)
            .map(|(pattern, c)| ComplementarityRow {
                pattern: *pattern,
                percent: c.iter().map(|&x| 100.0 * x as f64 / n as f64).collect(),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCountRow {
    pub k: usize,
    pub mean_pairs: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

/// Mean `|{(a, b) ∈ A × B : a ≠ b}|` per K, with B drawn from the IS ranking.
pub fn pair_count_stats(
    dataset: &Dataset,
    base: &HashMap<String, BaseRankings>,
    ks: &[usize],
) -> Result<Vec<PairCountRow>, EvalError> {
    let bases = lookup(base, dataset)?;
    if dataset.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let n = dataset.len() as f64;
    ks.iter()
        .map(|&k| {
            let (mut pairs, mut a, mut b) = (0usize, 0usize, 0usize);
            for (q, r) in dataset.questions.iter().zip(&bases) {
                let sets = build_pair_sets(&q.candidates, &r.bm25, &r.sts, &r.is, k)?;
                pairs += sets.pair_count();
                a += sets.a.len();
                b += sets.b.len();
            }
            Ok(PairCountRow {
                k,
                mean_pairs: pairs as f64 / n,
                mean_a: a as f64 / n,
                mean_b: b as f64 / n,
            })
        })
        .collect()
}
