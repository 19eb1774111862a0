//! TOML engine configuration.
//!
//! ```toml
//! [bm25]
//! k1 = 1.5
//! b = 0.75
//!
//! [scorer]
//! backend = "remote"
//! endpoint = "http://localhost:8080"
//! cache = "scores.jsonl"
//!
//! [fusion]
//! alpha = 3.0
//! beta = 1.0
//! k = 3
//!
//! [entities]
//! fuzzy_threshold = 0.85
//! ner = "rule"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::{NerProvider, RemoteNer, RuleNer, DEFAULT_FUZZY_THRESHOLD};
use crate::fusion::FusionConfig;
use crate::scorer::{CacheOnlyBackend, ProxyBackend, RemoteBackend, ScoreBackend, ScoreCache, Scorer, ScorerError};
use crate::sparse::Bm25Params;

pub const ENDPOINT_ENV: &str = "ENTAILRANK_SCORER_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Deterministic lexical stand-in.
    #[default]
    Proxy,
    /// Cross-encoder HTTP service.
    Remote,
    /// Replay from the score cache only; a miss is an error.
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub cache: Option<PathBuf>,
    pub batch_size: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            backend: BackendKind::Proxy,
            endpoint: None,
            cache: None,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NerKind {
    #[default]
    Rule,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntityConfig {
    pub fuzzy_threshold: f64,
    pub ner: NerKind,
    pub endpoint: Option<String>,
}

impl Default for EntityConfig {
    fn default() -> Self {
        EntityConfig {
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            ner: NerKind::Rule,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub bm25: Bm25Params,
    pub scorer: ScorerConfig,
    pub fusion: FusionConfig,
    pub entities: EntityConfig,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Applies the endpoint environment override.
    pub fn with_env(mut self) -> Self {
        if let Ok(ep) = std::env::var(ENDPOINT_ENV) {
            if !ep.trim().is_empty() {
                self.scorer.endpoint = Some(ep.trim().to_string());
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.fusion.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.bm25.b)) {
            return Err(ConfigError::Invalid(format!(
                "bm25 needs k1 >= 0 and b in [0, 1], got k1={} b={}",
                self.bm25.k1, self.bm25.b
            )));
        }
        if !(0.0..=1.0).contains(&self.entities.fuzzy_threshold) {
            return Err(ConfigError::Invalid(format!(
                "entities.fuzzy_threshold must be in [0, 1], got {}",
                self.entities.fuzzy_threshold
            )));
        }
        if self.scorer.backend == BackendKind::Remote && self.scorer.endpoint.is_none() {
            return Err(ConfigError::Invalid(format!(
                "scorer.backend = \"remote\" needs scorer.endpoint or {ENDPOINT_ENV}"
            )));
        }
        if self.scorer.backend == BackendKind::Cache && self.scorer.cache.is_none() {
            return Err(ConfigError::Invalid("scorer.backend = \"cache\" needs scorer.cache".into()));
        }
        if self.entities.ner == NerKind::Remote && self.entities.endpoint.is_none() {
            return Err(ConfigError::Invalid("entities.ner = \"remote\" needs entities.endpoint".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// The scorer described by `[scorer]`, with its cache loaded when set.
    pub fn build_scorer(&self) -> Result<Scorer, ConfigError> {
        self.validate()?;
        let backend: Arc<dyn ScoreBackend> = match self.scorer.backend {
            BackendKind::Proxy => Arc::new(ProxyBackend),
            BackendKind::Cache => Arc::new(CacheOnlyBackend),
            BackendKind::Remote => Arc::new(
                RemoteBackend::new(self.scorer.endpoint.as_deref().expect("validated"))
                    .with_batch_size(self.scorer.batch_size),
            ),
        };
        let mut scorer = Scorer::new(backend);
        if let Some(path) = &self.scorer.cache {
            let cache = match self.scorer.backend {
                BackendKind::Cache => ScoreCache::load(path)?,
                _ => ScoreCache::load_or_default(path)?,
            };
            scorer = scorer.with_cache(Arc::new(cache));
        }
        Ok(scorer)
    }

    pub fn build_ner(&self) -> Box<dyn NerProvider> {
        match (self.entities.ner, &self.entities.endpoint) {
            (NerKind::Remote, Some(ep)) => Box::new(RemoteNer::new(ep)),
            _ => Box::new(RuleNer),
        }
    }
}
