//! Named-entity mentions and the shared-entity predicate.
//!
//! A sentence's mentions are the union of NER spans, its document title and
//! any phrase enclosed in matched quotes. Two sentences share an entity when
//! some pair of their normalized mentions fuzzy-matches.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateId, CandidateSentence};

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.85;

#[derive(Debug, Error)]
pub enum EntityError {
    #[error("NER service unavailable: {0}")]
    Transport(String),
    #[error("NER service contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSource {
    Ner,
    DocTitle,
    QuotedPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub normalized: String,
    pub source: MentionSource,
    pub surface: String,
}

impl EntityMention {
    fn new(surface: &str, source: MentionSource) -> Option<Self> {
        let normalized = normalize_entity(surface);
        (!normalized.is_empty()).then(|| EntityMention {
            normalized,
            source,
            surface: surface.to_string(),
        })
    }
}

const ARTICLES: &[&str] = &["a", "an", "the"];

/// Lowercase, drop punctuation (internal hyphens survive), collapse
/// whitespace, strip leading articles. Idempotent.
pub fn normalize_entity(surface: &str) -> String {
    let lower = surface.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() || c.is_whitespace() {
            cleaned.push(c);
        } else if c == '-' {
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            if prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric) {
                cleaned.push(c);
            } else {
                cleaned.push(' ');
            }
        }
    }
    let mut words: Vec<&str> = cleaned.split_whitespace().collect();
    while words.first().is_some_and(|w| ARTICLES.contains(w)) {
        words.remove(0);
    }
    words.join(" ")
}

fn token_set(s: &str) -> HashSet<&str> {
    s.split_whitespace().collect()
}

/// `1 - levenshtein / max(len)` over characters.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / max as f64
}

/// Inclusive (token-subset) match, or edit similarity at or above `threshold`.
pub fn fuzzy_match(e1: &str, e2: &str, threshold: f64) -> bool {
    if e1.is_empty() || e2.is_empty() {
        return false;
    }
    let (t1, t2) = (token_set(e1), token_set(e2));
    if t1.is_subset(&t2) || t2.is_subset(&t1) {
        return true;
    }
    levenshtein_similarity(e1, e2) >= threshold
}

pub fn mentions_overlap(a: &[EntityMention], b: &[EntityMention], threshold: f64) -> bool {
    a.iter()
        .any(|x| b.iter().any(|y| fuzzy_match(&x.normalized, &y.normalized, threshold)))
}

/// Produces raw NER spans for each sentence of a pool.
pub trait NerProvider: Send + Sync {
    fn name(&self) -> &str;

    fn spans(&self, pool: &[CandidateSentence]) -> Result<Vec<Vec<String>>, EntityError>;
}

/// Capitalization heuristics: maximal runs of capitalized words, allowing
/// lowercase name particles between them.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleNer;

const CONNECTORS: &[&str] = &["of", "de", "von", "van", "der", "den", "da", "del", "di", "la", "le", "du"];

#[derive(Debug)]
struct Word<'a> {
    text: &'a str,
    opens: bool,
    closes: bool,
}

fn split_words(text: &str) -> Vec<Word<'_>> {
    let is_edge = |c: char| !c.is_alphanumeric();
    text.split_whitespace()
        .filter_map(|raw| {
            let opens = raw.starts_with(is_edge);
            let closes = raw.ends_with(is_edge);
            let mut w = raw.trim_matches(is_edge);
            for suffix in ["'s", "’s"] {
                if let Some(stripped) = w.strip_suffix(suffix) {
                    w = stripped;
                }
            }
            (!w.is_empty()).then_some(Word {
                text: w,
                opens,
                closes,
            })
        })
        .collect()
}

fn is_capitalized(w: &str) -> bool {
    w.chars().next().is_some_and(|c| c.is_uppercase())
}

fn strip_disambiguation(title: &str) -> &str {
    match title.rfind(" (") {
        Some(i) if title.ends_with(')') => &title[..i],
        _ => title,
    }
}

impl RuleNer {
    /// Spans for one sentence. `paragraph` holds every sentence of the same
    /// document, used to decide whether a sentence-initial word is a name.
    pub fn sentence_spans(&self, sentence: &CandidateSentence, paragraph: &[&CandidateSentence]) -> Vec<String> {
        let words = split_words(&sentence.text);
        let title_norm = normalize_entity(strip_disambiguation(&sentence.doc_title));
        let title_tokens: HashSet<&str> = token_set(&title_norm);
        let recurs_mid_sentence = |w: &str| {
            paragraph.iter().any(|s| {
                split_words(&s.text)
                    .iter()
                    .skip(1)
                    .any(|x| x.text == w)
            })
        };

        let mut spans = Vec::new();
        let mut i = 0;
        while i < words.len() {
            if !is_capitalized(words[i].text) {
                i += 1;
                continue;
            }
            let start = i;
            let mut end = i + 1; // exclusive
            let mut j = i;
            while !words[j].closes {
                // extend over capitalized words or connector + capitalized
                let next = j + 1;
                if next >= words.len() || words[next].opens {
                    break;
                }
                if is_capitalized(words[next].text) {
                    j = next;
                    end = j + 1;
                    continue;
                }
                let after = next + 1;
                if CONNECTORS.contains(&words[next].text)
                    && !words[next].closes
                    && after < words.len()
                    && !words[after].opens
                    && is_capitalized(words[after].text)
                {
                    j = after;
                    end = j + 1;
                    continue;
                }
                break;
            }
            let mut first = start;
            if start == 0 {
                let w = words[0].text;
                let keep = recurs_mid_sentence(w) || title_tokens.contains(normalize_entity(w).as_str());
                if !keep {
                    first = 1;
                    while first < end && !is_capitalized(words[first].text) {
                        first += 1;
                    }
                }
            }
            if first < end {
                let span: Vec<&str> = words[first..end].iter().map(|w| w.text).collect();
                spans.push(span.join(" "));
            }
            i = end;
        }
        spans
    }
}

impl NerProvider for RuleNer {
    fn name(&self) -> &str {
        "rules"
    }

    fn spans(&self, pool: &[CandidateSentence]) -> Result<Vec<Vec<String>>, EntityError> {
        let mut by_doc: HashMap<&str, Vec<&CandidateSentence>> = HashMap::new();
        for c in pool {
            by_doc.entry(c.doc_title.as_str()).or_default().push(c);
        }
        Ok(pool
            .iter()
            .map(|c| self.sentence_spans(c, &by_doc[c.doc_title.as_str()]))
            .collect())
    }
}

/// Client for an external NER service: `POST {endpoint}/ner` with
/// `{"texts": [...]}`, answered by `{"entities": [[span, ...], ...]}`.
pub struct RemoteNer {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteNer {
    pub fn new(endpoint: &str) -> Self {
        RemoteNer {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
        }
    }
}

#[derive(Deserialize)]
struct NerResponse {
    entities: Vec<Vec<String>>,
}

impl NerProvider for RemoteNer {
    fn name(&self) -> &str {
        "remote"
    }

    fn spans(&self, pool: &[CandidateSentence]) -> Result<Vec<Vec<String>>, EntityError> {
        let texts: Vec<&str> = pool.iter().map(|c| c.text.as_str()).collect();
        let url = format!("{}/ner", self.endpoint);
        let resp = self
            .agent
            .post(&url)
            .send_json(serde_json::json!({ "texts": texts }))
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => EntityError::Contract(format!("HTTP {code} from {url}")),
                ureq::Error::Transport(t) => EntityError::Transport(t.to_string()),
            })?;
        let parsed: NerResponse = resp
            .into_json()
            .map_err(|e| EntityError::Contract(e.to_string()))?;
        if parsed.entities.len() != pool.len() {
            return Err(EntityError::Contract(format!(
                "sent {} texts, received {} entity lists",
                pool.len(),
                parsed.entities.len()
            )));
        }
        Ok(parsed.entities)
    }
}

/// Substrings enclosed in matched double or single quotes. Apostrophes
/// inside words do not open or close a single-quoted phrase.
pub fn quoted_phrases(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let pairs = [('"', '"'), ('“', '”'), ('\'', '\''), ('‘', '’')];
    for (open, close) in pairs {
        let single = open == '\'' || open == '‘';
        let mut i = 0;
        while i < chars.len() {
            let opens_here = chars[i] == open
                && (!single || i == 0 || !chars[i - 1].is_alphanumeric())
                && chars.get(i + 1).is_some_and(|c| !c.is_whitespace());
            if !opens_here {
                i += 1;
                continue;
            }
            let close_at = (i + 1..chars.len()).find(|&j| {
                chars[j] == close
                    && (!single || chars.get(j + 1).is_none_or(|c| !c.is_alphanumeric()))
            });
            match close_at {
                Some(j) if j > i + 1 => {
                    let inner: String = chars[i + 1..j].iter().collect();
                    if !inner.trim().is_empty() {
                        out.push(inner.trim().to_string());
                    }
                    i = j + 1;
                }
                _ => i += 1,
            }
        }
    }
    out
}

fn collect_mentions(sentence: &CandidateSentence, ner_spans: &[String]) -> Vec<EntityMention> {
    let mut mentions: Vec<EntityMention> = ner_spans
        .iter()
        .filter_map(|s| EntityMention::new(s, MentionSource::Ner))
        .chain(EntityMention::new(strip_disambiguation(&sentence.doc_title), MentionSource::DocTitle))
        .chain(
            quoted_phrases(&sentence.text)
                .iter()
                .filter_map(|q| EntityMention::new(q, MentionSource::QuotedPhrase)),
        )
        .collect();
    mentions.sort();
    mentions.dedup_by(|a, b| a.normalized == b.normalized && a.source == b.source);
    mentions
}

/// Mentions of one sentence using the rule-based NER, given the other
/// sentences of its paragraph.
pub fn extract_entities(sentence: &CandidateSentence, paragraph: &[&CandidateSentence]) -> Vec<EntityMention> {
    collect_mentions(sentence, &RuleNer.sentence_spans(sentence, paragraph))
}

/// Memoized mentions for one question's pool.
#[derive(Debug, Clone, Default)]
pub struct EntityIndex {
    mentions: HashMap<CandidateId, Vec<EntityMention>>,
    threshold: f64,
}

impl EntityIndex {
    pub fn build(pool: &[CandidateSentence], ner: &dyn NerProvider, threshold: f64) -> Result<Self, EntityError> {
        let spans = ner.spans(pool)?;
        let mentions = pool
            .iter()
            .zip(spans)
            .map(|(c, s)| (c.candidate_id.clone(), collect_mentions(c, &s)))
            .collect();
        Ok(EntityIndex { mentions, threshold })
    }

    pub fn mentions(&self, id: &CandidateId) -> &[EntityMention] {
        self.mentions.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Symmetric: true iff some mention of `a` fuzzy-matches some mention of `b`.
    pub fn share_entity(&self, a: &CandidateId, b: &CandidateId) -> bool {
        mentions_overlap(self.mentions(a), self.mentions(b), self.threshold)
    }
}

/// Convenience form over two sentences with rule-based extraction and no
/// paragraph context beyond each sentence itself.
pub fn share_entity(a: &CandidateSentence, b: &CandidateSentence, threshold: f64) -> bool {
    let ma = extract_entities(a, &[a]);
    let mb = extract_entities(b, &[b]);
    mentions_overlap(&ma, &mb, threshold)
}
