//! Deterministic stand-in for the cross-encoders.
//!
//! STS is the Jaccard overlap of query and passage tokens. IS is the Jaccard
//! overlap of passage tokens with the answer-type markers that the query's
//! question words call for ("nationality" → demonyms, "where" → place
//! words, ...), so it rewards sentences that could answer the question
//! without repeating it.

use std::collections::BTreeSet;

use super::{Provenance, ScoreBackend, ScoreItem, ScorerError, ScorerKind};
use crate::sparse::tokenize;

const YEAR_MARKER: &str = "<year>";
const NUMBER_MARKER: &str = "<number>";

const DEMONYMS: &[&str] = &[
    "american", "australian", "austrian", "belgian", "brazilian", "british", "canadian",
    "chinese", "danish", "dutch", "english", "french", "german", "greek", "indian", "irish",
    "italian", "japanese", "korean", "mexican", "norwegian", "polish", "russian", "scottish",
    "spanish", "swedish", "swiss", "welsh", "citizen", "nationality",
];

const PLACES: &[&str] = &[
    "city", "town", "village", "country", "state", "county", "province", "region", "capital",
    "located", "island", "headquartered", "based", "situated",
];

const TIMES: &[&str] = &["year", "century", "decade", "date", YEAR_MARKER];

const PEOPLE: &[&str] = &[
    "actor", "actress", "singer", "songwriter", "writer", "author", "novelist", "poet",
    "director", "producer", "politician", "musician", "composer", "painter", "player", "founder",
    "journalist", "businessman",
];

const COUNTS: &[&str] = &["number", "total", NUMBER_MARKER];

/// Question cue → answer-type markers.
const LEXICON: &[(&str, &[&str])] = &[
    ("nationality", DEMONYMS),
    ("country", DEMONYMS),
    ("where", PLACES),
    ("located", PLACES),
    ("city", PLACES),
    ("when", TIMES),
    ("year", TIMES),
    ("who", PEOPLE),
    ("whom", PEOPLE),
    ("occupation", PEOPLE),
    ("profession", PEOPLE),
    ("many", COUNTS),
    ("much", COUNTS),
];

/// Query-side expansion: markers implied by the question words.
pub fn expand_query(query: &str) -> BTreeSet<String> {
    let tokens = tokenize(query, false);
    let mut out = BTreeSet::new();
    for t in &tokens {
        for (cue, markers) in LEXICON {
            if t == cue {
                out.extend(markers.iter().map(|m| m.to_string()));
            }
        }
    }
    out
}

/// Passage-side tokens plus numeric markers.
pub fn passage_features(passage: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for t in tokenize(passage, true) {
        if t.chars().all(|c| c.is_ascii_digit()) {
            out.insert(NUMBER_MARKER.to_string());
            if t.len() == 4 && matches!(t.parse::<u32>(), Ok(1000..=2100)) {
                out.insert(YEAR_MARKER.to_string());
            }
        }
        out.insert(t);
    }
    out
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ProxyBackend;

impl ProxyBackend {
    pub fn score_one(kind: ScorerKind, query: &str, passage: &str) -> f64 {
        match kind {
            ScorerKind::Sts => {
                let q: BTreeSet<String> = tokenize(query, true).into_iter().collect();
                let p: BTreeSet<String> = tokenize(passage, true).into_iter().collect();
                jaccard(&q, &p)
            }
            ScorerKind::Is => jaccard(&passage_features(passage), &expand_query(query)),
        }
    }
}

impl ScoreBackend for ProxyBackend {
    fn provenance(&self) -> Provenance {
        Provenance::Proxy
    }

    fn tag(&self) -> String {
        "proxy".into()
    }

    fn score_batch(&self, kind: ScorerKind, items: &[ScoreItem<'_>]) -> Result<Vec<f64>, ScorerError> {
        Ok(items
            .iter()
            .map(|i| Self::score_one(kind, i.query, i.passage))
            .collect())
    }
}
