use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{Provenance, ScoreBackend, ScoreItem, ScorerError, ScorerKind};

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub question_id: String,
    /// Candidate id, or a composite pair/augmented key.
    pub candidate_id: String,
    pub scorer: ScorerKind,
    pub score: f64,
}

type Key = (String, String, ScorerKind);

/// JSONL score store. Single writer, many readers.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: RwLock<BTreeMap<Key, f64>>,
}

impl ScoreCache {
    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        let err = |detail: String| ScorerError::CacheFile {
            path: path.display().to_string(),
            detail,
        };
        let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CacheEntry =
                serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
            if !(0.0..=1.0).contains(&e.score) {
                return Err(err(format!("line {}: score {} outside [0, 1]", n + 1, e.score)));
            }
            entries.insert((e.question_id, e.candidate_id, e.scorer), e.score);
        }
        Ok(ScoreCache {
            entries: RwLock::new(entries),
        })
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn load_or_default(path: &Path) -> Result<Self, ScorerError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    /// Writes all entries sorted by key, scores with six decimals.
    pub fn save(&self, path: &Path) -> Result<(), ScorerError> {
        let err = |e: std::io::Error| ScorerError::CacheFile {
            path: path.display().to_string(),
            detail: e.to_string(),
        };
        let entries = self.entries.read().expect("cache lock poisoned");
        let mut out = BufWriter::new(fs::File::create(path).map_err(err)?);
        for ((qid, cid, scorer), score) in entries.iter() {
            writeln!(
                out,
                "{{\"question_id\":{},\"candidate_id\":{},\"scorer\":\"{}\",\"score\":{:.6}}}",
                serde_json::to_string(qid).expect("string serializes"),
                serde_json::to_string(cid).expect("string serializes"),
                scorer,
                score
            )
            .map_err(err)?;
        }
        out.flush().map_err(err)
    }

    pub fn get(&self, question_id: &str, key: &str, scorer: ScorerKind) -> Option<f64> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&(question_id.to_string(), key.to_string(), scorer))
            .copied()
    }

    pub fn insert_all(&self, entries: impl IntoIterator<Item = CacheEntry>) {
        let mut map = self.entries.write().expect("cache lock poisoned");
        for e in entries {
            map.insert((e.question_id, e.candidate_id, e.scorer), e.score);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_scorer(&self, scorer: ScorerKind) -> bool {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .keys()
            .any(|k| k.2 == scorer)
    }

    pub fn entries(&self) -> Vec<CacheEntry> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .iter()
            .map(|((q, c, s), v)| CacheEntry {
                question_id: q.clone(),
                candidate_id: c.clone(),
                scorer: *s,
                score: *v,
            })
            .collect()
    }
}

/// Backend for replaying a cache file: every lookup that reaches it is a miss.
#[derive(Debug, Default, Clone, Copy)]
pub struct CacheOnlyBackend;

impl ScoreBackend for CacheOnlyBackend {
    fn provenance(&self) -> Provenance {
        Provenance::Cache
    }

    fn tag(&self) -> String {
        "cache".into()
    }

    fn score_batch(&self, kind: ScorerKind, items: &[ScoreItem<'_>]) -> Result<Vec<f64>, ScorerError> {
        let first = items.first().expect("non-empty batch");
        Err(ScorerError::CacheMiss {
            scorer: kind,
            question_id: first.question_id.to_string(),
            key: first.key.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CandidateSentence, QuestionRecord, QuestionType};
    use crate::scorer::{score_pool, Scorer};
    use std::collections::BTreeSet;
    use std::sync::Arc;

    #[test]
    fn hand_written_cache_file_becomes_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        fs::write(
            &path,
            concat!(
                "{\"question_id\":\"q\",\"candidate_id\":\"q#T#0\",\"scorer\":\"sts\",\"score\":0.123456}\n",
                "{\"question_id\":\"q\",\"candidate_id\":\"q#T#1\",\"scorer\":\"sts\",\"score\":0.900000}\n",
                "{\"question_id\":\"q\",\"candidate_id\":\"q#T#0\",\"scorer\":\"is\",\"score\":0.5}\n",
            ),
        )
        .unwrap();
        let record = QuestionRecord {
            question_id: "q".into(),
            question_text: "?".into(),
            question_type: QuestionType::Bridge,
            candidates: vec![
                CandidateSentence::new("q", "T", 0, "a"),
                CandidateSentence::new("q", "T", 1, "b"),
            ],
            gold_facts: BTreeSet::new(),
            answer: None,
        };
        let cache = Arc::new(ScoreCache::load(&path).unwrap());
        let scorer = Scorer::new(Arc::new(CacheOnlyBackend)).with_cache(cache);
        let t = score_pool(&scorer, ScorerKind::Sts, &record).unwrap();
        assert_eq!(t.get(&record.candidates[0].candidate_id, ScorerKind::Sts), Some(0.123456));
        assert_eq!(t.get(&record.candidates[1].candidate_id, ScorerKind::Sts), Some(0.9));
        // IS is incomplete for candidate 1
        let err = score_pool(&scorer, ScorerKind::Is, &record).unwrap_err();
        assert!(matches!(err, ScorerError::CacheMiss { scorer: ScorerKind::Is, .. }));
        assert!(err.to_string().contains("is"));
    }

    #[test]
    fn save_reload_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let cache = ScoreCache::default();
        cache.insert_all((0..50).map(|i| CacheEntry {
            question_id: format!("q{}", i % 3),
            candidate_id: format!("c\"{i}"),
            scorer: if i % 2 == 0 { ScorerKind::Sts } else { ScorerKind::Is },
            score: crate::scorer::quantize((i as f64 * 0.017_123_9).fract()),
        }));
        cache.save(&path).unwrap();
        let first = fs::read_to_string(&path).unwrap();
        let back = ScoreCache::load(&path).unwrap();
        for e in cache.entries() {
            let v = back.get(&e.question_id, &e.candidate_id, e.scorer).unwrap();
            assert_eq!(v.to_bits(), e.score.to_bits());
        }
        back.save(&path).unwrap();
        assert_eq!(first, fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn rejects_out_of_range_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"question_id\":\"q\",\"candidate_id\":\"c\",\"scorer\":\"sts\",\"score\":1.2}\n").unwrap();
        assert!(ScoreCache::load(&path).is_err());
        fs::write(&path, "nope\n").unwrap();
        assert!(ScoreCache::load(&path).is_err());
        assert!(ScoreCache::load_or_default(&dir.path().join("absent")).unwrap().is_empty());
    }
}
