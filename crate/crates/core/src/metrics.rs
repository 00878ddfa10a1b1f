//! Article and outline evaluation: heading soft recall, heading entity
//! recall, ROUGE-1/2/L, article entity recall and judge-based rubric grading.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::OutlineRecord;
use crate::hdacr::{extract_entities, HdacrConfig, SourceRole};
use crate::providers::{Embedder, GenParams, Generator, NerRegistry, ProviderError};
use crate::retriever::segment_sentences;
use crate::text::{tokenize, Lang};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("entity extraction failed: {0}")]
    Entities(String),
    #[error("E_JUDGE_PARSE: no 1-5 score in judge reply for {dimension}: `{reply}`")]
    JudgeParse { dimension: String, reply: String },
}

impl MetricError {
    pub fn rule_id(&self) -> &'static str {
        match self {
            Self::Precondition(_) => "E_PRECONDITION",
            Self::Provider(_) | Self::Entities(_) => "E_PROVIDER",
            Self::JudgeParse { .. } => "E_JUDGE_PARSE",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeLVariant {
    /// One LCS over the whole token sequence.
    #[default]
    Text,
    /// Union LCS per reference sentence.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Compare headings as full paths joined by " - " rather than bare texts.
    pub full_paths: bool,
    pub ner_models: Vec<String>,
    pub rouge_l: RougeLVariant,
    pub lang: Lang,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            full_paths: true,
            ner_models: HdacrConfig::default().models,
            rouge_l: RougeLVariant::Text,
            lang: Lang::En,
        }
    }
}

/// A recall value, flagged when the reference had nothing to recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    pub value: f64,
    pub vacuous: bool,
}

fn heading_strings(outline: &OutlineRecord, full_paths: bool) -> Vec<String> {
    if full_paths {
        outline.path_strings()
    } else {
        outline.headings.iter().map(|h| h.text.clone()).collect()
    }
}

/// Soft cardinality of the items whose pairwise similarities are `sim`:
/// each item counts as one over the sum of its similarities.
pub fn soft_cardinality(sim: &[Vec<f64>]) -> f64 {
    sim.iter().map(|row| 1.0 / row.iter().sum::<f64>().max(f64::MIN_POSITIVE)).sum()
}

/// Pairwise `max(0, cos)` over the given vectors.
fn similarity_matrix(vectors: &[crate::providers::EmbeddingVector]) -> Vec<Vec<f64>> {
    vectors.iter().map(|a| vectors.iter().map(|b| a.similarity(b)).collect()).collect()
}

fn sub_matrix(sim: &[Vec<f64>], range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    sim[range.clone()].iter().map(|row| row[range.clone()].to_vec()).collect()
}

/// Share of the reference headings' soft cardinality that the generated
/// headings also cover, clamped to `[0, 1]`.
pub fn heading_soft_recall(
    gen: &OutlineRecord,
    reference: &OutlineRecord,
    embedder: &dyn Embedder,
    cfg: &MetricsConfig,
) -> Result<f64, MetricError> {
    let r = heading_strings(reference, cfg.full_paths);
    let g = heading_strings(gen, cfg.full_paths);
    if r.is_empty() || g.is_empty() {
        return Err(MetricError::Precondition("both outlines need headings".into()));
    }
    let texts: Vec<String> = r.iter().chain(&g).cloned().collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = embedder.embed(&refs)?;
    let all = similarity_matrix(&vectors);
    let card_r = soft_cardinality(&sub_matrix(&all, 0..r.len()));
    let card_g = soft_cardinality(&sub_matrix(&all, r.len()..texts.len()));
    let card_union = soft_cardinality(&all);
    Ok(((card_r + card_g - card_union) / card_r).clamp(0.0, 1.0))
}

fn entity_surfaces<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    ner: &NerRegistry,
    cfg: &MetricsConfig,
) -> Result<HashSet<String>, MetricError> {
    let hcfg = HdacrConfig { models: cfg.ner_models.clone(), lang: cfg.lang, ..HdacrConfig::default() };
    let mut out = HashSet::new();
    for text in texts {
        if text.trim().is_empty() {
            continue;
        }
        let set = extract_entities(text, SourceRole::Reference, &hcfg, ner).map_err(|e| MetricError::Entities(e.to_string()))?;
        out.extend(set.entities.into_iter().map(|e| e.surface));
    }
    Ok(out)
}

fn recall_of(reference: &HashSet<String>, gen: &HashSet<String>) -> Recall {
    if reference.is_empty() {
        return Recall { value: 1.0, vacuous: true };
    }
    Recall { value: reference.intersection(gen).count() as f64 / reference.len() as f64, vacuous: false }
}

/// Fraction of entities named in the reference headings that the generated
/// headings also name.
pub fn heading_entity_recall(
    gen: &OutlineRecord,
    reference: &OutlineRecord,
    ner: &NerRegistry,
    cfg: &MetricsConfig,
) -> Result<Recall, MetricError> {
    let r = entity_surfaces(reference.headings.iter().map(|h| h.text.as_str()), ner, cfg)?;
    let g = entity_surfaces(gen.headings.iter().map(|h| h.text.as_str()), ner, cfg)?;
    Ok(recall_of(&r, &g))
}

static PARAGRAPH_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n\s*\n").unwrap());

pub fn paragraphs(text: &str) -> Vec<&str> {
    PARAGRAPH_BREAK.split(text).map(str::trim).filter(|p| !p.is_empty()).collect()
}

/// Entity recall over whole articles; entities are collected paragraph by
/// paragraph and pooled.
pub fn article_entity_recall(gen: &str, reference: &str, ner: &NerRegistry, cfg: &MetricsConfig) -> Result<Recall, MetricError> {
    let r = entity_surfaces(paragraphs(reference), ner, cfg)?;
    let g = entity_surfaces(paragraphs(gen), ner, cfg)?;
    Ok(recall_of(&r, &g))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(hits: usize, gen_total: usize, ref_total: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        Self::new(ratio(hits, gen_total), ratio(hits, ref_total))
    }

    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    for w in tokens.windows(n) {
        *out.entry(w).or_default() += 1;
    }
    out
}

pub fn rouge_n(gen: &[String], reference: &[String], n: usize) -> Prf {
    let g = ngram_counts(gen, n);
    let r = ngram_counts(reference, n);
    let hits: usize = r.iter().map(|(k, c)| (*c).min(g.get(k).copied().unwrap_or(0))).sum();
    Prf::from_counts(hits, gen.len().saturating_sub(n - 1), reference.len().saturating_sub(n - 1))
}

/// LCS table; `table[i][j]` is the LCS length of `a[i..]` and `b[j..]`.
fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            t[i][j] = if a[i] == b[j] { t[i + 1][j + 1] + 1 } else { t[i + 1][j].max(t[i][j + 1]) };
        }
    }
    t
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    lcs_table(a, b)[0][0]
}

/// Positions in `a` of one longest common subsequence with `b`.
fn lcs_positions(a: &[String], b: &[String]) -> Vec<usize> {
    let t = lcs_table(a, b);
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            out.push(i);
            i += 1;
            j += 1;
        } else if t[i + 1][j] >= t[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn rouge_l_summary(gen: &str, reference: &str, lang: Lang) -> Prf {
    let sentences = |t: &str| -> Vec<Vec<String>> {
        segment_sentences(t, lang).iter().map(|s| tokenize(&s.text, lang)).filter(|t| !t.is_empty()).collect()
    };
    let g = sentences(gen);
    let r = sentences(reference);
    let hits: usize = r
        .iter()
        .map(|rs| g.iter().flat_map(|gs| lcs_positions(rs, gs)).collect::<HashSet<_>>().len())
        .sum();
    Prf::from_counts(hits, g.iter().map(Vec::len).sum(), r.iter().map(Vec::len).sum())
}

pub fn rouge(gen: &str, reference: &str, lang: Lang, variant: RougeLVariant) -> Result<RougeScores, MetricError> {
    let r = tokenize(reference, lang);
    if r.is_empty() {
        return Err(MetricError::Precondition("reference text has no tokens".into()));
    }
    let g = tokenize(gen, lang);
    let rouge_l = match variant {
        RougeLVariant::Text => Prf::from_counts(lcs_len(&g, &r), g.len(), r.len()),
        RougeLVariant::Summary => rouge_l_summary(gen, reference, lang),
    };
    Ok(RougeScores { rouge1: rouge_n(&g, &r, 1), rouge2: rouge_n(&g, &r, 2), rouge_l })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricDimension {
    InterestLevel,
    Organization,
    Relevance,
    Coverage,
}

impl RubricDimension {
    pub const ALL: [RubricDimension; 4] = [Self::InterestLevel, Self::Organization, Self::Relevance, Self::Coverage];

    pub fn title(self) -> &'static str {
        match self {
            Self::InterestLevel => "Interest Level",
            Self::Organization => "Coherence and Organization",
            Self::Relevance => "Relevance and Focus",
            Self::Coverage => "Coverage",
        }
    }

    fn question(self) -> &'static str {
        match self {
            Self::InterestLevel => "How engaging and thought-provoking is the article?",
            Self::Organization => "Is the article well-organized and logically structured?",
            Self::Relevance => "Does the article stay on topic and maintain a clear focus?",
            Self::Coverage => "Does the article provide an in-depth exploration of the topic and have good coverage?",
        }
    }

    fn levels(self) -> [&'static str; 5] {
        match self {
            Self::InterestLevel => [
                "Not engaging at all; no attempt to capture the reader's attention.",
                "Fairly engaging with a basic narrative but lacking depth.",
                "Moderately engaging with several interesting points.",
                "Quite engaging with a well-structured narrative and noteworthy points that frequently capture and retain attention.",
                "Exceptionally engaging throughout, with a compelling narrative that consistently stimulates interest.",
            ],
            Self::Organization => [
                "Disorganized; lacks logical structure and coherence.",
                "Somewhat organized; some structure, but not consistently coherent.",
                "Organized; a clear structure is mostly effective with some lapses in coherence.",
                "Good organization; a clear structure with minor lapses in coherence.",
                "Excellently organized; a logical, seamless flow between sections.",
            ],
            Self::Relevance => [
                "Off-topic; the content does not align with the headline or core topic.",
                "Somewhat on topic but with several digressions; the core subject is evident but not consistently adhered to.",
                "Generally on topic, despite a few unrelated details.",
                "Mostly on topic and focused; the narrative has a consistent relevance to the core subject with infrequent digressions.",
                "Exceptionally focused and entirely on topic; the article is tightly centered on the subject.",
            ],
            Self::Coverage => [
                "Severely lacking; offers little to no coverage of the topic's primary aspects.",
                "Partial coverage; includes some of the topic's main aspects but misses others.",
                "Acceptable breadth; covers most main aspects, though it may stray into minor unnecessary details or overlook some relevant points.",
                "Good coverage; achieves broad coverage of the topic, hitting on all major points with minimal extraneous information.",
                "Exemplary in breadth; delivers outstanding coverage, thoroughly detailing all crucial aspects without including irrelevant information.",
            ],
        }
    }
}

/// Judge prompt in the absolute-grading layout: task description, the
/// article, a five-level rubric, and a request for a `[RESULT] N` verdict.
pub fn rubric_prompt(article: &str, topic: &str, dim: RubricDimension) -> String {
    let mut s = String::from(
        "###Task Description:\nAn instruction, a response to evaluate, and a score rubric representing an evaluation criterion are given.\n\
         1. Write detailed feedback that assesses the quality of the response strictly based on the given score rubric.\n\
         2. After writing the feedback, write a score that is an integer between 1 and 5.\n\
         3. The output format should look as follows: \"Feedback: (write feedback) [RESULT] (an integer between 1 and 5)\"\n\n",
    );
    s.push_str(&format!("###The instruction to evaluate:\nWrite a Wikipedia-style article about \"{topic}\".\n\n"));
    s.push_str(&format!("###Response to evaluate:\n{}\n\n", article.trim()));
    s.push_str(&format!("###Score Rubrics:\n[{}: {}]\n", dim.title(), dim.question()));
    for (i, level) in dim.levels().iter().enumerate() {
        s.push_str(&format!("Score {}: {level}\n", i + 1));
    }
    s.push_str("\n###Feedback:");
    s
}

static SCORE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:\bscore\s*[:：]|\[result\])\s*([1-5])(?:\s*/\s*5)?\b").unwrap());

/// The last `Score: N` or `[RESULT] N` in a judge reply, with N in 1..=5.
pub fn parse_judge_score(reply: &str) -> Option<u8> {
    SCORE_RE.captures_iter(reply).last().and_then(|c| c[1].parse().ok())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeExchange {
    pub dimension: RubricDimension,
    pub prompt: String,
    pub replies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricScores {
    pub interest_level: f64,
    pub organization: f64,
    pub relevance: f64,
    pub coverage: f64,
    pub judge: String,
    pub transcript: Vec<JudgeExchange>,
}

/// Grades one article on every rubric dimension. Each reply must carry a
/// score; an unparseable reply gets one retry with the next seed.
pub fn rubric_grade(article: &str, topic: &str, judge: &dyn Generator, params: &GenParams) -> Result<RubricScores, MetricError> {
    if article.trim().is_empty() {
        return Err(MetricError::Precondition("empty article".into()));
    }
    let mut scores = [0.0; 4];
    let mut transcript = Vec::new();
    for (slot, dim) in scores.iter_mut().zip(RubricDimension::ALL) {
        let prompt = rubric_prompt(article, topic, dim);
        let mut replies = Vec::new();
        let mut parsed = None;
        for attempt in 0..2u64 {
            let p = GenParams { seed: params.seed.wrapping_add(attempt), ..*params };
            let reply = judge.generate(&prompt, &p)?;
            parsed = parse_judge_score(&reply);
            replies.push(reply);
            if parsed.is_some() {
                break;
            }
        }
        let Some(score) = parsed else {
            return Err(MetricError::JudgeParse {
                dimension: dim.title().to_string(),
                reply: replies.last().cloned().unwrap_or_default(),
            });
        };
        *slot = f64::from(score);
        transcript.push(JudgeExchange { dimension: dim, prompt, replies });
    }
    Ok(RubricScores {
        interest_level: scores[0],
        organization: scores[1],
        relevance: scores[2],
        coverage: scores[3],
        judge: judge.id().to_string(),
        transcript,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub topic: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_soft_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_entity_recall: Option<Recall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge: Option<RougeScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_recall: Option<Recall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rubric: Option<RubricScores>,
}
