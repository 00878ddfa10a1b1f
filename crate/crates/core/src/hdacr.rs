//! Entity-level hallucination detection for citation reliability.
//!
//! Entities are extracted from the reference text R and the generated text G
//! by every model in the configured NER set. Each generated entity is scored
//! against the reference: an exact match on the normalized surface scores 1;
//! otherwise the score is the mean of an embedding similarity and a
//! normalized BM25 score against the reference sentences. Any score below the
//! threshold marks the text as containing a hallucination.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Index, Bm25Params};
use crate::providers::{EmbeddingVector, Embedder, NerRegistry, ProviderError, Providers};
use crate::retriever::{segment_sentences, Sentence};
use crate::text::{normalize_surface, sha256_hex, tokenize, Lang};

pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceRole {
    Reference,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Normalized surface (NFKC, lowercase, collapsed whitespace).
    pub surface: String,
    /// The surface exactly as it appears in the source text.
    pub raw: String,
    /// Char offsets `[start, end)` into the source text.
    pub span: (usize, usize),
    pub label: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub source_role: SourceRole,
    pub entities: Vec<Entity>,
}

impl EntitySet {
    pub fn contains(&self, surface: &str) -> bool {
        self.entities.iter().any(|e| e.surface == surface)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub entity: Entity,
    pub kind: MatchKind,
    pub gamma: f64,
    /// Soft matches only.
    pub gamma_sbert: Option<f64>,
    /// Soft matches only.
    pub gamma_bm25: Option<f64>,
    pub best_reference_entity: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    HallucinationPresent,
    NoHallucination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationReport {
    pub verdict: Verdict,
    /// One entry per generated entity, in extraction order.
    pub scores: Vec<MatchScore>,
    /// Entries of `scores` below the threshold.
    pub unverifiable: Vec<MatchScore>,
    pub threshold: f64,
    pub reference_digest: String,
    pub generated_digest: String,
    pub models: Vec<String>,
    pub embedder: String,
}

/// What the embedding half of a soft match compares the entity against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityTarget {
    /// Reference entity surfaces.
    #[default]
    Entities,
    /// Whole reference sentences.
    Sentences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdacrConfig {
    /// NER model ids, in priority order for attribution.
    pub models: Vec<String>,
    pub threshold: f64,
    /// Expected embedder id; checked against the provider when set.
    pub embedder: Option<String>,
    pub bm25: Bm25Params,
    pub similarity_target: SimilarityTarget,
    /// Language for sentence segmentation and BM25 tokenization.
    pub lang: Lang,
}

impl Default for HdacrConfig {
    fn default() -> Self {
        Self {
            models: vec!["fallback-caps".to_string()],
            threshold: DEFAULT_THRESHOLD,
            embedder: None,
            bm25: Bm25Params::default(),
            similarity_target: SimilarityTarget::Entities,
            lang: Lang::En,
        }
    }
}

impl HdacrConfig {
    pub fn validate(&self) -> Result<(), HdacrError> {
        if self.models.is_empty() {
            return Err(HdacrError::Config("the NER model set is empty".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(HdacrError::Config(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HdacrError {
    #[error("empty {0:?} text")]
    EmptyInput(SourceRole),
    #[error("configuration: {0}")]
    Config(String),
    #[error("NER model `{model}` failed: {source}")]
    Ner {
        model: String,
        #[source]
        source: ProviderError,
    },
    #[error("embedder `{embedder}` failed: {source}")]
    Embed {
        embedder: String,
        #[source]
        source: ProviderError,
    },
}

/// Union of the entities found by every model, deduplicated by normalized
/// surface. The first occurrence wins, scanning models in configured order.
pub fn extract_entities(
    text: &str,
    role: SourceRole,
    cfg: &HdacrConfig,
    ner: &NerRegistry,
) -> Result<EntitySet, HdacrError> {
    if text.trim().is_empty() {
        return Err(HdacrError::EmptyInput(role));
    }
    let mut entities: Vec<Entity> = Vec::new();
    for model in &cfg.models {
        let spans = ner.ner(text, model).map_err(|source| HdacrError::Ner { model: model.clone(), source })?;
        for s in spans {
            let surface = normalize_surface(&s.surface);
            if surface.is_empty() || entities.iter().any(|e| e.surface == surface) {
                continue;
            }
            entities.push(Entity { surface, raw: s.surface, span: (s.start, s.end), label: s.label, model: model.clone() });
        }
    }
    Ok(EntitySet { source_role: role, entities })
}

/// Reference-side state shared by every entity score: the reference entity
/// set, its sentences, their BM25 statistics and the embeddings compared
/// against.
pub struct ReferenceContext {
    pub entities: EntitySet,
    pub sentences: Vec<Sentence>,
    pub index: Bm25Index,
    targets: Vec<(Option<String>, EmbeddingVector)>,
}

impl ReferenceContext {
    pub fn new(
        entities: EntitySet,
        sentences: Vec<Sentence>,
        embedder: &dyn Embedder,
        cfg: &HdacrConfig,
    ) -> Result<Self, HdacrError> {
        let docs: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(&s.text, cfg.lang)).collect();
        let index = Bm25Index::new(docs, cfg.bm25);
        let labels: Vec<(Option<String>, &str)> = match cfg.similarity_target {
            SimilarityTarget::Entities => entities.entities.iter().map(|e| (Some(e.surface.clone()), e.surface.as_str())).collect(),
            SimilarityTarget::Sentences => sentences.iter().map(|s| (None, s.text.as_str())).collect(),
        };
        let texts: Vec<&str> = labels.iter().map(|(_, t)| *t).collect();
        let vectors = embed(embedder, &texts)?;
        let targets = labels.into_iter().map(|(l, _)| l).zip(vectors).collect();
        Ok(Self { entities, sentences, index, targets })
    }
}

fn embed(embedder: &dyn Embedder, texts: &[&str]) -> Result<Vec<EmbeddingVector>, HdacrError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    embedder
        .embed(texts)
        .map_err(|source| HdacrError::Embed { embedder: embedder.id().to_string(), source })
}

/// Scores one generated entity against the reference.
pub fn entity_match_score(
    entity: &Entity,
    reference: &ReferenceContext,
    embedder: &dyn Embedder,
    cfg: &HdacrConfig,
) -> Result<MatchScore, HdacrError> {
    if reference.entities.contains(&entity.surface) {
        return Ok(MatchScore {
            entity: entity.clone(),
            kind: MatchKind::Hard,
            gamma: 1.0,
            gamma_sbert: None,
            gamma_bm25: None,
            best_reference_entity: Some(entity.surface.clone()),
        });
    }
    let mut sbert = 0.0;
    let mut best = None;
    if !reference.targets.is_empty() {
        let v = embed(embedder, &[entity.surface.as_str()])?.remove(0);
        let mut best_idx = 0;
        for (i, (_, target)) in reference.targets.iter().enumerate() {
            let s = v.similarity(target).min(1.0);
            if i == 0 || s > sbert {
                sbert = s;
                best_idx = i;
            }
        }
        best = reference.targets[best_idx].0.clone();
    }
    let query = tokenize(&entity.surface, cfg.lang);
    let bm25 = if query.is_empty() { 0.0 } else { reference.index.max_normalized(&query).clamp(0.0, 1.0) };
    Ok(MatchScore {
        entity: entity.clone(),
        kind: MatchKind::Soft,
        gamma: (sbert + bm25) / 2.0,
        gamma_sbert: Some(sbert),
        gamma_bm25: Some(bm25),
        best_reference_entity: best,
    })
}

/// Checks generated text `g` against reference text `r`.
pub fn detect(g: &str, r: &str, cfg: &HdacrConfig, providers: &Providers) -> Result<HallucinationReport, HdacrError> {
    cfg.validate()?;
    let embedder = providers.embedder.as_ref();
    if let Some(expected) = &cfg.embedder {
        if expected != embedder.id() {
            return Err(HdacrError::Config(format!("configured embedder `{expected}` but provider is `{}`", embedder.id())));
        }
    }
    if r.trim().is_empty() {
        return Err(HdacrError::EmptyInput(SourceRole::Reference));
    }
    let generated = extract_entities(g, SourceRole::Generated, cfg, &providers.ner)?;
    let reference = extract_entities(r, SourceRole::Reference, cfg, &providers.ner)?;
    let context = ReferenceContext::new(reference, segment_sentences(r, cfg.lang), embedder, cfg)?;
    let scores = generated
        .entities
        .par_iter()
        .map(|e| entity_match_score(e, &context, embedder, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_report(scores, cfg, r, g, embedder.id()))
}

fn assemble_report(scores: Vec<MatchScore>, cfg: &HdacrConfig, r: &str, g: &str, embedder: &str) -> HallucinationReport {
    let unverifiable: Vec<MatchScore> = scores.iter().filter(|s| s.gamma < cfg.threshold).cloned().collect();
    HallucinationReport {
        verdict: if unverifiable.is_empty() { Verdict::NoHallucination } else { Verdict::HallucinationPresent },
        scores,
        unverifiable,
        threshold: cfg.threshold,
        reference_digest: sha256_hex(r.as_bytes()),
        generated_digest: sha256_hex(g.as_bytes()),
        models: cfg.models.clone(),
        embedder: embedder.to_string(),
    }
}

/// Batch detection over many `(G, R)` pairs, caching nothing across pairs;
/// results keep input order.
pub fn detect_many(
    pairs: &[(String, String)],
    cfg: &HdacrConfig,
    providers: &Providers,
) -> Vec<Result<HallucinationReport, HdacrError>> {
    pairs.par_iter().map(|(g, r)| detect(g, r, cfg, providers)).collect()
}

/// Surfaces of unverifiable entities mapped to their spans in G.
pub fn unverifiable_spans(report: &HallucinationReport) -> HashMap<String, (usize, usize)> {
    report.unverifiable.iter().map(|s| (s.entity.surface.clone(), s.entity.span)).collect()
}
