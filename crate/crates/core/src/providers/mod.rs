//! External capabilities (embedding, NER, generation, web search) behind
//! traits, with deterministic offline fallbacks and an HTTP client for the
//! model sidecar.
//!
//! Every model call in the toolkit goes through these traits, so fallback and
//! sidecar implementations are interchangeable.

mod fallback;
mod search;
mod sidecar;

pub use fallback::{CapitalizedNer, FnGenerator, HashEmbedder, ScriptedGenerator, TemplateEchoGenerator};
pub use search::{FixturePage, FixtureSearch, SerperSearch};
pub use sidecar::{HealthStatus, SidecarClient, SidecarEmbedder, SidecarGenerator, SidecarNer};

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub const NORM_TOLERANCE: f64 = 1e-6;

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= Self::NORM_TOLERANCE
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        crate::text::cosine(&self.values, &other.values)
    }

    /// `max(0, cosine)`: negative similarity counts as unrelated.
    pub fn similarity(&self, other: &EmbeddingVector) -> f64 {
        self.cosine(other).max(0.0)
    }
}

/// An entity mention as reported by an NER model. Offsets are in chars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerSpan {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { max_tokens: 2048, temperature: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
    pub snippet: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("empty input text")]
    EmptyInput,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unknown NER model `{0}`")]
    UnknownModel(String),
    #[error("{endpoint} unavailable after {attempts} attempts: {message}")]
    Unavailable { endpoint: String, attempts: u32, message: String },
    #[error("{endpoint} returned HTTP {status} ({code}): {message}")]
    Http { endpoint: String, status: u16, code: String, message: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Other(String),
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    /// One unit-norm vector per input, in input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

pub trait NerModel: Send + Sync {
    fn id(&self) -> &str;
    /// Non-overlapping spans that slice `text` exactly.
    fn extract(&self, text: &str) -> Result<Vec<NerSpan>, ProviderError>;
}

pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, prompt: &str, params: &GenParams) -> Result<String, ProviderError>;
}

pub trait SearchProvider: Send + Sync {
    fn id(&self) -> &str;
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderError>;
}

/// Named NER models; the hallucination detector's model set is a list of ids
/// looked up here.
#[derive(Clone, Default)]
pub struct NerRegistry {
    models: Vec<Arc<dyn NerModel>>,
}

impl NerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, model: Arc<dyn NerModel>) -> Self {
        self.register(model);
        self
    }

    pub fn register(&mut self, model: Arc<dyn NerModel>) {
        self.models.retain(|m| m.id() != model.id());
        self.models.push(model);
    }

    pub fn ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.id().to_string()).collect()
    }

    pub fn ner(&self, text: &str, model: &str) -> Result<Vec<NerSpan>, ProviderError> {
        self.models
            .iter()
            .find(|m| m.id() == model)
            .ok_or_else(|| ProviderError::UnknownModel(model.to_string()))?
            .extract(text)
    }
}

impl std::fmt::Debug for NerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NerRegistry").field("models", &self.ids()).finish()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Fallback,
    Sidecar,
}

pub const SIDECAR_URL_ENV: &str = "DEFINE_SIDECAR_URL";
pub const SEARCH_KEY_ENV: &str = "DEFINE_SEARCH_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_concurrency: usize,
    pub api_key: Option<String>,
    pub retries: u32,
    pub backoff_ms: u64,
    /// NER model ids served by the sidecar.
    pub ner_models: Vec<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Fallback,
            endpoint: None,
            timeout_ms: 30_000,
            max_concurrency: 4,
            api_key: None,
            retries: 3,
            backoff_ms: 250,
            ner_models: vec!["flair-ner".to_string()],
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.kind == ProviderKind::Sidecar && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(ProviderError::Config(format!(
                "sidecar providers need an endpoint (set `endpoint` or {SIDECAR_URL_ENV})"
            )));
        }
        if self.max_concurrency == 0 {
            return Err(ProviderError::Config("max_concurrency must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    #[default]
    Fallback,
    Serper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub kind: SearchKind,
    /// Directory of local pages indexed by the fallback search.
    pub fixture_dir: Option<PathBuf>,
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            kind: SearchKind::Fallback,
            fixture_dir: None,
            endpoint: "https://google.serper.dev/search".to_string(),
            api_key: None,
            timeout_ms: 10_000,
        }
    }
}

/// The provider set handed to every stage.
#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub ner: NerRegistry,
    pub generator: Arc<dyn Generator>,
    pub search: Arc<dyn SearchProvider>,
}

impl Providers {
    /// Deterministic offline providers; no network, no weights.
    pub fn fallback() -> Self {
        Self {
            embedder: Arc::new(HashEmbedder::default()),
            ner: NerRegistry::new().with(Arc::new(CapitalizedNer)),
            generator: Arc::new(TemplateEchoGenerator),
            search: Arc::new(FixtureSearch::empty()),
        }
    }

    pub fn from_config(cfg: &ProviderConfig, search: &SearchConfig) -> Result<Self, ProviderError> {
        let mut cfg = cfg.clone();
        if cfg.endpoint.is_none() {
            cfg.endpoint = std::env::var(SIDECAR_URL_ENV).ok().filter(|s| !s.is_empty());
        }
        cfg.validate()?;
        let search: Arc<dyn SearchProvider> = match search.kind {
            SearchKind::Fallback => Arc::new(match &search.fixture_dir {
                Some(dir) => FixtureSearch::from_dir(dir)?,
                None => FixtureSearch::empty(),
            }),
            SearchKind::Serper => {
                let key = search
                    .api_key
                    .clone()
                    .or_else(|| std::env::var(SEARCH_KEY_ENV).ok())
                    .ok_or_else(|| ProviderError::Config(format!("serper search needs an api key ({SEARCH_KEY_ENV})")))?;
                Arc::new(SerperSearch::new(&search.endpoint, &key, search.timeout_ms)?)
            }
        };
        match cfg.kind {
            ProviderKind::Fallback => Ok(Self { search, ..Self::fallback() }),
            ProviderKind::Sidecar => {
                let client = Arc::new(SidecarClient::new(&cfg)?);
                let mut ner = NerRegistry::new();
                for model in &cfg.ner_models {
                    ner.register(Arc::new(SidecarNer::new(client.clone(), model)));
                }
                Ok(Self {
                    embedder: Arc::new(SidecarEmbedder::new(client.clone())),
                    ner,
                    generator: Arc::new(SidecarGenerator::new(client)),
                    search,
                })
            }
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_search(mut self, search: Arc<dyn SearchProvider>) -> Self {
        self.search = search;
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn ner_ids(&self) -> Vec<String> {
        self.ner.ids()
    }
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers")
            .field("embedder", &self.embedder.id())
            .field("ner", &self.ner)
            .field("generator", &self.generator.id())
            .field("search", &self.search.id())
            .finish()
    }
}
