//! Question records and candidate sentences.
//!
//! Reads HotpotQA distractor-setting files (a JSON array or one object per
//! line) and flattens every question's context paragraphs into a candidate
//! pool. Sentence splits are taken verbatim from the source so that
//! supporting-fact indices stay valid.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} contains no valid question records ({rejected} rejected)")]
    EmptyDataset { path: PathBuf, rejected: usize },
}

/// Stable identifier of a candidate: `qid#title#idx`, with `#` and `\`
/// escaped inside the question id and title.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(String);

impl CandidateId {
    pub fn new(question_id: &str, doc_title: &str, sent_idx: usize) -> Self {
        CandidateId(format!(
            "{}#{}#{}",
            escape_component(question_id),
            escape_component(doc_title),
            sent_idx
        ))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CandidateId {
    fn from(s: &str) -> Self {
        CandidateId(s.to_string())
    }
}

fn escape_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '#' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSentence {
    pub candidate_id: CandidateId,
    pub doc_title: String,
    /// Position within its source paragraph.
    pub sent_idx: usize,
    pub text: String,
}

impl CandidateSentence {
    pub fn new(question_id: &str, doc_title: &str, sent_idx: usize, text: &str) -> Self {
        CandidateSentence {
            candidate_id: CandidateId::new(question_id, doc_title, sent_idx),
            doc_title: doc_title.to_string(),
            sent_idx,
            text: text.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Bridge,
    Comparison,
}

/// Gold supporting fact: `(doc_title, sent_idx)`.
pub type GoldFact = (String, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub question_text: String,
    pub question_type: QuestionType,
    /// Paragraph-then-sentence source order.
    pub candidates: Vec<CandidateSentence>,
    pub gold_facts: BTreeSet<GoldFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl QuestionRecord {
    /// The candidate pool in stable source order.
    pub fn candidate_pool(&self) -> &[CandidateSentence] {
        &self.candidates
    }

    pub fn gold_ids(&self) -> HashSet<CandidateId> {
        self.candidates
            .iter()
            .filter(|c| self.gold_facts.contains(&(c.doc_title.clone(), c.sent_idx)))
            .map(|c| c.candidate_id.clone())
            .collect()
    }

    pub fn candidate(&self, id: &CandidateId) -> Option<&CandidateSentence> {
        self.candidates.iter().find(|c| &c.candidate_id == id)
    }

    /// Checks the record invariants; returns a human-readable reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if c.text.trim().is_empty() {
                return Err(format!("empty sentence at ({}, {})", c.doc_title, c.sent_idx));
            }
            if !seen.insert((c.doc_title.as_str(), c.sent_idx)) {
                return Err(format!(
                    "duplicate candidate ({}, {})",
                    c.doc_title, c.sent_idx
                ));
            }
        }
        for (title, idx) in &self.gold_facts {
            if !seen.contains(&(title.as_str(), *idx)) {
                return Err(format!(
                    "supporting fact ({title}, {idx}) does not match any candidate"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterApplied {
    None,
    BridgeOnly,
}

/// Whether sentence text is as distributed or was coreference-resolved
/// upstream. Ingest never rewrites text; this only labels it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextVariant {
    #[default]
    Raw,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// Zero-based position of the record in the source file.
    pub position: usize,
    pub question_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub questions: Vec<QuestionRecord>,
    pub source_path: String,
    pub filter_applied: FilterApplied,
    #[serde(default)]
    pub text_variant: TextVariant,
    #[serde(default)]
    pub rejections: Vec<Rejection>,
    /// Sentences dropped because they were blank; indices of their
    /// neighbours are untouched.
    #[serde(default)]
    pub blank_sentences_dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, question_id: &str) -> Option<&QuestionRecord> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }

    /// Writes one [`QuestionRecord`] per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        for q in &self.questions {
            let line = serde_json::to_string(q).expect("question record serializes");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Raw HotpotQA record shape.
#[derive(Debug, Deserialize)]
struct HotpotRecord {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    #[serde(rename = "type")]
    kind: Option<String>,
    context: Vec<(String, Vec<String>)>,
    supporting_facts: Vec<(String, usize)>,
    #[serde(default)]
    answer: Option<String>,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct IngestOptions {
    pub text_variant: TextVariant,
}

/// Ingests a HotpotQA distractor file with default options.
pub fn ingest_hotpot(path: &Path) -> Result<Dataset, CorpusError> {
    ingest_hotpot_with(path, IngestOptions::default())
}

pub fn ingest_hotpot_with(path: &Path, opts: IngestOptions) -> Result<Dataset, CorpusError> {
    let values = read_json_records(path)?;
    let mut questions = Vec::new();
    let mut rejections = Vec::new();
    let mut blank = 0usize;
    let mut seen_ids = HashSet::new();

    for (position, value) in values.into_iter().enumerate() {
        let loose_id = value
            .as_ref()
            .ok()
            .and_then(|v| v.get("_id"))
            .and_then(Value::as_str)
            .map(str::to_string);
        let mut reject = |reason: String| {
            log::warn!(
                "rejecting record {position} ({}): {reason}",
                loose_id.as_deref().unwrap_or("<no id>")
            );
            rejections.push(Rejection {
                position,
                question_id: loose_id.clone(),
                reason,
            });
        };
        let value = match value {
            Ok(v) => v,
            Err(e) => {
                reject(format!("malformed JSON: {e}"));
                continue;
            }
        };
        let raw: HotpotRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                reject(format!("schema mismatch: {e}"));
                continue;
            }
        };
        match convert_record(raw, &mut blank) {
            Ok(record) => {
                if !seen_ids.insert(record.question_id.clone()) {
                    reject(format!("duplicate question id {}", record.question_id));
                    continue;
                }
                questions.push(record);
            }
            Err(reason) => reject(reason),
        }
    }

    if questions.is_empty() {
        return Err(CorpusError::EmptyDataset {
            path: path.to_path_buf(),
            rejected: rejections.len(),
        });
    }
    Ok(Dataset {
        questions,
        source_path: path.display().to_string(),
        filter_applied: FilterApplied::None,
        text_variant: opts.text_variant,
        rejections,
        blank_sentences_dropped: blank,
    })
}

fn convert_record(raw: HotpotRecord, blank: &mut usize) -> Result<QuestionRecord, String> {
    let question_type = match raw.kind.as_deref() {
        Some("bridge") => QuestionType::Bridge,
        Some("comparison") => QuestionType::Comparison,
        Some(other) => return Err(format!("unknown question type {other:?}")),
        None => {
            log::info!("question {} has no type tag; treating as bridge", raw.id);
            QuestionType::Bridge
        }
    };
    let mut candidates = Vec::new();
    for (title, sentences) in &raw.context {
        for (idx, text) in sentences.iter().enumerate() {
            if text.trim().is_empty() {
                *blank += 1;
                continue;
            }
            candidates.push(CandidateSentence::new(&raw.id, title, idx, text));
        }
    }
    let record = QuestionRecord {
        question_id: raw.id,
        question_text: raw.question,
        question_type,
        candidates,
        gold_facts: raw.supporting_facts.into_iter().collect(),
        answer: raw.answer,
    };
    record.validate()?;
    Ok(record)
}

/// Returns one entry per record; per-line parse failures in the JSONL
/// variant come back as `Err` so the caller can count them.
fn read_json_records(path: &Path) -> Result<Vec<Result<Value, serde_json::Error>>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let values: Vec<Value> =
            serde_json::from_str(trimmed).map_err(|source| CorpusError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(values.into_iter().map(Ok).collect())
    } else {
        Ok(text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect())
    }
}

/// Reads a normalized dump produced by [`Dataset::write_jsonl`].
pub fn read_normalized(path: &Path) -> Result<Dataset, CorpusError> {
    let mut questions = Vec::new();
    let mut rejections = Vec::new();
    for (position, value) in read_json_records(path)?.into_iter().enumerate() {
        let parsed = value
            .map_err(|e| e.to_string())
            .and_then(|v| serde_json::from_value::<QuestionRecord>(v).map_err(|e| e.to_string()))
            .and_then(|r| r.validate().map(|_| r));
        match parsed {
            Ok(r) => questions.push(r),
            Err(reason) => rejections.push(Rejection {
                position,
                question_id: None,
                reason,
            }),
        }
    }
    if questions.is_empty() {
        return Err(CorpusError::EmptyDataset {
            path: path.to_path_buf(),
            rejected: rejections.len(),
        });
    }
    let filter_applied = if questions
        .iter()
        .all(|q| q.question_type == QuestionType::Bridge)
    {
        FilterApplied::BridgeOnly
    } else {
        FilterApplied::None
    };
    Ok(Dataset {
        questions,
        source_path: path.display().to_string(),
        filter_applied,
        text_variant: TextVariant::Raw,
        rejections,
        blank_sentences_dropped: 0,
    })
}

/// Loads either a raw HotpotQA file or a normalized dump, sniffing the
/// first record for the normalized `question_id` key.
pub fn load_dataset(path: &Path) -> Result<Dataset, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let head = text.trim_start();
    let first_obj_has_qid = if head.starts_with('[') {
        false
    } else {
        head.lines()
            .next()
            .and_then(|l| serde_json::from_str::<Value>(l).ok())
            .is_some_and(|v| v.get("question_id").is_some())
    };
    if first_obj_has_qid {
        read_normalized(path)
    } else {
        ingest_hotpot(path)
    }
}

/// Keeps only bridge-type questions.
pub fn filter_bridge(dataset: Dataset) -> Dataset {
    Dataset {
        questions: dataset
            .questions
            .into_iter()
            .filter(|q| q.question_type == QuestionType::Bridge)
            .collect(),
        filter_applied: FilterApplied::BridgeOnly,
        ..dataset
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn record(id: &str, kind: Option<&str>, facts: Value) -> Value {
        let mut v = json!({
            "_id": id,
            "question": format!("question {id}?"),
            "context": [
                ["Alpha", ["A zero.", "A one.", "A two."]],
                ["Beta #1", ["B zero.", "B one."]]
            ],
            "supporting_facts": facts,
        });
        if let Some(k) = kind {
            v["type"] = json!(k);
        }
        v
    }

    #[test]
    fn flattens_paragraphs_in_source_order() {
        let dir = tempfile::tempdir().unwrap();
        let body = json!([record("q1", Some("bridge"), json!([["Alpha", 0], ["Beta #1", 1]]))]);
        let p = write(&dir, "one.json", &body.to_string());
        let ds = ingest_hotpot(&p).unwrap();
        assert_eq!(ds.len(), 1);
        let q = &ds.questions[0];
        assert_eq!(q.candidates.len(), 5);
        let order: Vec<_> = q
            .candidate_pool()
            .iter()
            .map(|c| (c.doc_title.as_str(), c.sent_idx))
            .collect();
        assert_eq!(
            order,
            vec![("Alpha", 0), ("Alpha", 1), ("Alpha", 2), ("Beta #1", 0), ("Beta #1", 1)]
        );
        assert_eq!(q.candidates[3].candidate_id.as_str(), "q1#Beta \\#1#0");
        assert_eq!(q.gold_ids().len(), 2);
    }

    #[test]
    fn ten_record_fixture_with_one_dangling_fact() {
        let dir = tempfile::tempdir().unwrap();
        let mut records: Vec<Value> = (0..9)
            .map(|i| record(&format!("q{i}"), Some("bridge"), json!([["Alpha", 1]])))
            .collect();
        records.insert(4, record("bad", Some("bridge"), json!([["Alpha", 7]])));
        let p = write(&dir, "ten.json", &Value::Array(records).to_string());
        let ds = ingest_hotpot(&p).unwrap();
        assert_eq!(ds.len(), 9);
        assert_eq!(ds.rejections.len(), 1);
        assert_eq!(ds.rejections[0].question_id.as_deref(), Some("bad"));
        assert_eq!(ds.rejections[0].position, 4);
    }

    #[test]
    fn jsonl_variant_and_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let lines = [
            record("a", Some("bridge"), json!([])).to_string(),
            "{not json".to_string(),
            json!({"_id": "x", "question": "q"}).to_string(),
            record("b", None, json!([["Alpha", 2]])).to_string(),
        ];
        let p = write(&dir, "lines.jsonl", &lines.join("\n"));
        let ds = ingest_hotpot(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.rejections.len(), 2);
        // missing type tag is treated as bridge
        assert_eq!(ds.questions[1].question_type, QuestionType::Bridge);
    }

    #[test]
    fn unreadable_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.json");
        assert!(matches!(ingest_hotpot(&missing), Err(CorpusError::Io { .. })));
        let p = write(&dir, "empty.json", "[]");
        assert!(matches!(
            ingest_hotpot(&p),
            Err(CorpusError::EmptyDataset { rejected: 0, .. })
        ));
        let p = write(&dir, "bad.json", "[{\"_id\": 1}");
        assert!(matches!(ingest_hotpot(&p), Err(CorpusError::Json { .. })));
    }

    #[test]
    fn blank_sentences_are_dropped_but_indices_kept() {
        let dir = tempfile::tempdir().unwrap();
        let body = json!([{
            "_id": "q", "question": "?", "type": "bridge",
            "context": [["T", ["first", "  ", "third"]]],
            "supporting_facts": [["T", 2]]
        }]);
        let p = write(&dir, "blank.json", &body.to_string());
        let ds = ingest_hotpot(&p).unwrap();
        let idx: Vec<_> = ds.questions[0].candidates.iter().map(|c| c.sent_idx).collect();
        assert_eq!(idx, vec![0, 2]);
        assert_eq!(ds.blank_sentences_dropped, 1);
    }

    #[test]
    fn bridge_filter_counts_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = Vec::new();
        for i in 0..6 {
            records.push(record(&format!("b{i}"), Some("bridge"), json!([])));
        }
        for i in 0..4 {
            records.push(record(&format!("c{i}"), Some("comparison"), json!([])));
        }
        let p = write(&dir, "mix.json", &Value::Array(records).to_string());
        let ds = ingest_hotpot(&p).unwrap();
        assert_eq!(ds.len(), 10);
        let once = filter_bridge(ds);
        assert_eq!(once.len(), 6);
        assert_eq!(once.filter_applied, FilterApplied::BridgeOnly);
        let twice = filter_bridge(once.clone());
        assert_eq!(once, twice);
    }

    #[test]
    fn comparison_only_filters_to_empty() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<Value> = (0..3)
            .map(|i| record(&format!("c{i}"), Some("comparison"), json!([])))
            .collect();
        let p = write(&dir, "cmp.json", &Value::Array(records).to_string());
        assert!(filter_bridge(ingest_hotpot(&p).unwrap()).is_empty());
    }

    #[test]
    fn ingest_is_idempotent_and_normalized_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let body = json!([
            record("q1", Some("bridge"), json!([["Alpha", 0]])),
            record("q2", Some("comparison"), json!([["Beta #1", 1]]))
        ]);
        let p = write(&dir, "d.json", &body.to_string());
        let a = ingest_hotpot(&p).unwrap();
        let b = ingest_hotpot(&p).unwrap();
        assert_eq!(a, b);

        let out = dir.path().join("norm.jsonl");
        a.write_jsonl(&out).unwrap();
        let back = load_dataset(&out).unwrap();
        assert_eq!(back.questions, a.questions);
        let raw_again = load_dataset(&p).unwrap();
        assert_eq!(raw_again.questions, a.questions);
    }

    #[test]
    fn empty_pool_accessor() {
        let r = QuestionRecord {
            question_id: "q".into(),
            question_text: "?".into(),
            question_type: QuestionType::Bridge,
            candidates: vec![],
            gold_facts: BTreeSet::new(),
            answer: None,
        };
        assert!(r.candidate_pool().is_empty());
        assert_eq!(r.candidate_pool(), r.candidate_pool());
    }
}
