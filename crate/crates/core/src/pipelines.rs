//! Article generation baselines: an outline from the topic, then one section
//! per leaf heading written from web, local-index, supplied or no references.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::annotator::{
    generate_question, render_prompt, select_template, AnnotatorError, QuestionRequest, TemplateBank,
};
use crate::bm25::{Bm25Index, Bm25Params};
use crate::corpus::{flatten, to_sorted_json, Abstract, AbstractSetRecord, HeadingNode, OutlineRecord};
use crate::providers::{Embedder, GenParams, Generator, ProviderError, Providers, SearchProvider};
use crate::retriever::{build_abstract, extract_main_text, segment_sentences, FetchStatus, Fetcher, RetrieverError};
use crate::text::{content_id, sha256_hex, tokens, Lang};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    /// No retrieval at all.
    Direct,
    Web,
    Local,
    /// Uses the supplied reference abstracts, without retrieval.
    Grounded,
}

impl std::str::FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Self::Direct),
            "web" => Ok(Self::Web),
            "local" => Ok(Self::Local),
            "grounded" => Ok(Self::Grounded),
            other => Err(format!("unknown mode `{other}` (expected direct, web, local or grounded)")),
        }
    }
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Web => "web",
            Self::Local => "local",
            Self::Grounded => "grounded",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("E_OUTLINE_PARSE: reply yielded {found} headings, need at least 2")]
    OutlineParse { found: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
}

impl PipelineError {
    pub fn rule_id(&self) -> &'static str {
        match self {
            Self::OutlineParse { .. } => "E_OUTLINE_PARSE",
            Self::Precondition(_) => "E_PRECONDITION",
            Self::Provider(_) => "E_PROVIDER",
            Self::Retriever(e) => e.rule_id(),
        }
    }
}

pub const OUTLINE_INSTRUCTION: &str = "Write an outline for a long-form article on the topic \"{topic}\". \
Reply with a numbered list of section headings only, numbering subsections like 1.1 and 1.2.";

/// Section prompt used when a section has no references.
pub const DIRECT_SECTION_TEMPLATE: &str =
    "Answer the following questions. Please provide detailed answers with a minimum of 300 words: {Question}";

static MARKDOWN_HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(#{1,6})\s+(.+?)\s*#*$").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+(?:\.\d+)*)\.?\)?\s+(.+)$").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([ \t]*)[-*+]\s+(.+)$").unwrap());

fn clean_heading(text: &str) -> String {
    text.trim().trim_matches(|c| c == '*' || c == '_').trim().trim_end_matches(':').trim().to_string()
}

/// Reads `(level, text)` pairs from a markdown, numbered or bulleted list.
/// Lines without a list marker are ignored.
pub fn parse_outline_reply(reply: &str) -> Vec<(u32, String)> {
    let mut out = Vec::new();
    for line in reply.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim();
        let parsed = if let Some(c) = MARKDOWN_HEADING.captures(trimmed) {
            Some((c[1].len() as u32, clean_heading(&c[2])))
        } else if let Some(c) = NUMBERED.captures(trimmed) {
            Some((c[1].split('.').count() as u32, clean_heading(&c[2])))
        } else if let Some(c) = BULLET.captures(line) {
            let indent: usize = c[1].chars().map(|ch| if ch == '\t' { 4 } else { 1 }).sum();
            Some((indent as u32 / 2 + 1, clean_heading(&c[2])))
        } else {
            None
        };
        if let Some((level, text)) = parsed.filter(|(_, t)| !t.is_empty()) {
            out.push((level, text));
        }
    }
    out
}

pub fn outline_from_levels(topic: &str, lang: Lang, items: &[(u32, String)], source: &str) -> OutlineRecord {
    let roots = HeadingNode::forest_from_levels(items, 1, &[]);
    OutlineRecord {
        id: content_id("ol", topic, &[], ""),
        topic: topic.to_string(),
        lang,
        headings: flatten(&roots),
        source_url: source.to_string(),
    }
}

/// Asks the generator for an outline. A reply with fewer than two headings
/// gets one retry with the next seed.
pub fn generate_outline(topic: &str, lang: Lang, llm: &dyn Generator, params: &GenParams) -> Result<OutlineRecord, PipelineError> {
    if topic.trim().is_empty() {
        return Err(PipelineError::Precondition("empty topic".into()));
    }
    let prompt = OUTLINE_INSTRUCTION.replace("{topic}", topic.trim());
    let mut found = 0;
    for attempt in 0..2u64 {
        let p = GenParams { seed: params.seed.wrapping_add(attempt), ..*params };
        let items = parse_outline_reply(&llm.generate(&prompt, &p)?);
        found = items.len();
        if found >= 2 {
            return Ok(outline_from_levels(topic.trim(), lang, &items, &format!("generated:{}", llm.id())));
        }
    }
    Err(PipelineError::OutlineParse { found })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDocument {
    /// `{record_id}:{abstract_index:04}`.
    pub doc_id: String,
    pub topic: String,
    pub section_path: Vec<String>,
    pub text: String,
    pub source_url: String,
    pub source_sentence_indices: Vec<usize>,
}

/// BM25 index over every abstract of an abstract-set corpus. Documents are
/// kept sorted by id so positional ties are id ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalIndex {
    pub documents: Vec<LocalDocument>,
    pub bm25: Bm25Index,
}

impl LocalIndex {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn urls(&self) -> HashSet<&str> {
        self.documents.iter().map(|d| d.source_url.as_str()).collect()
    }
}

pub fn build_local_index(records: &[AbstractSetRecord], params: Bm25Params) -> Result<LocalIndex, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::Precondition("the local corpus is empty".into()));
    }
    let mut documents: Vec<LocalDocument> = records
        .iter()
        .flat_map(|r| {
            r.abstracts.iter().enumerate().map(move |(i, a)| LocalDocument {
                doc_id: format!("{}:{i:04}", r.id),
                topic: r.topic.clone(),
                section_path: r.section_path.clone(),
                text: a.text.clone(),
                source_url: a.source_url.clone(),
                source_sentence_indices: a.source_sentence_indices.clone(),
            })
        })
        .collect();
    documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let bm25 = Bm25Index::new(documents.iter().map(|d| tokens(&d.text)), params);
    Ok(LocalIndex { documents, bm25 })
}

/// Top `k` documents by BM25 score, ties broken by document id. Relevance is
/// the score normalized by its saturation bound.
pub fn retrieve_local(query: &str, index: &LocalIndex, k: usize) -> Result<Vec<Abstract>, PipelineError> {
    if k == 0 {
        return Err(PipelineError::Precondition("k must be at least 1".into()));
    }
    let q = tokens(query);
    Ok(index
        .bm25
        .rank(&q)
        .into_iter()
        .take(k)
        .map(|(i, _)| {
            let d = &index.documents[i];
            Abstract {
                text: d.text.clone(),
                source_url: d.source_url.clone(),
                source_sentence_indices: d.source_sentence_indices.clone(),
                relevance: Some(index.bm25.normalized_score(&q, i)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WebConfig {
    pub sentences_per_abstract: usize,
    pub min_relevance: f64,
    pub workers: usize,
}

impl Default for WebConfig {
    fn default() -> Self {
        Self { sentences_per_abstract: 3, min_relevance: 0.0, workers: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WebRetrieval {
    pub abstracts: Vec<Abstract>,
    /// One entry per hit that produced no abstract.
    pub warnings: Vec<String>,
}

/// Search, fetch every hit, and distill each page into an abstract against
/// the query. Hits that fail at any step become warnings.
pub fn retrieve_web(
    query: &str,
    search: &dyn SearchProvider,
    fetcher: &Fetcher,
    embedder: &dyn Embedder,
    k: usize,
    lang: Lang,
    cfg: &WebConfig,
) -> Result<WebRetrieval, PipelineError> {
    if k == 0 {
        return Err(PipelineError::Precondition("k must be at least 1".into()));
    }
    let hits = search.search(query, k)?;
    let urls: Vec<String> = hits.iter().map(|h| h.url.clone()).collect();
    let mut out = WebRetrieval::default();
    for result in fetcher.fetch_all(&urls, cfg.workers) {
        let body = match (&result.status, &result.body) {
            (FetchStatus::Ok, Some(body)) => body,
            (status, _) => {
                out.warnings.push(format!("{}: {status:?}", result.url));
                continue;
            }
        };
        let text = match extract_main_text(body, result.content_type.as_deref().unwrap_or("text/plain")) {
            Ok(t) => t,
            Err(e) => {
                out.warnings.push(format!("{}: {e}", result.url));
                continue;
            }
        };
        let sentences = segment_sentences(&text, lang);
        match build_abstract(query, &sentences, embedder, cfg.sentences_per_abstract, cfg.min_relevance, &result.url)? {
            Some(a) => out.abstracts.push(a),
            None => out.warnings.push(format!("{}: no usable sentences", result.url)),
        }
    }
    out.abstracts.truncate(k);
    for w in &out.warnings {
        log::warn!("web retrieval: {w}");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// References per section.
    pub k: usize,
    pub lang: Lang,
    pub gen: GenParams,
    pub web: WebConfig,
    pub bm25: Bm25Params,
    /// Provenance timestamp; the current time when unset.
    pub timestamp: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 4,
            lang: Lang::En,
            gen: GenParams::default(),
            web: WebConfig::default(),
            bm25: Bm25Params::default(),
            timestamp: None,
        }
    }
}

/// Mode-specific inputs.
#[derive(Default, Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub index: Option<&'a LocalIndex>,
    pub fetcher: Option<&'a Fetcher>,
    /// Reference abstract sets for grounded mode.
    pub grounded: Option<&'a [AbstractSetRecord]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSection {
    pub heading_path: Vec<String>,
    pub text: String,
    /// Source URLs cited, in first-use order.
    pub citations: Vec<String>,
    /// Every URL the section's retrieval returned.
    pub retrieval_trace: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleProvenance {
    pub models: BTreeMap<String, String>,
    pub timestamp: String,
    pub config_hash: String,
    /// Sections whose generation failed and were left empty.
    pub failed_sections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedArticle {
    pub topic: String,
    pub mode: PipelineMode,
    pub outline: OutlineRecord,
    /// Leaf sections in outline order.
    pub sections: Vec<GeneratedSection>,
    pub provenance: ArticleProvenance,
}

impl GeneratedArticle {
    pub fn citations(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.sections
            .iter()
            .flat_map(|s| &s.citations)
            .map(String::as_str)
            .filter(|u| seen.insert(*u))
            .collect()
    }

    /// All section texts separated by blank lines.
    pub fn plain_text(&self) -> String {
        self.sections.iter().map(|s| s.text.trim()).filter(|t| !t.is_empty()).collect::<Vec<_>>().join("\n\n")
    }

    /// Markdown with `[n]` markers after each section and a numbered
    /// reference list.
    pub fn to_markdown(&self) -> String {
        let urls = self.citations();
        let number = |u: &str| urls.iter().position(|x| *x == u).map_or(0, |i| i + 1);
        let mut out = format!("# {}\n", self.topic);
        for h in &self.outline.headings {
            out.push_str(&format!("\n{} {}\n", "#".repeat((h.level as usize + 1).min(6)), h.text));
            if let Some(section) = self.sections.iter().find(|s| s.heading_path == h.path) {
                let text = section.text.trim();
                if !text.is_empty() {
                    let marks: String = section.citations.iter().map(|u| format!("[{}]", number(u))).collect();
                    out.push_str(&format!("\n{text}{}{marks}\n", if marks.is_empty() { "" } else { " " }));
                }
            }
        }
        if !urls.is_empty() {
            out.push_str("\n## References\n\n");
            for (i, u) in urls.iter().enumerate() {
                out.push_str(&format!("[{}] {u}\n", i + 1));
            }
        }
        out
    }
}

/// Assigns supplied abstract sets to outline leaves: exact path first, then
/// the leaf with the best BM25 score for the set's path and abstracts, then
/// the leaf sharing the longest path prefix, else the first leaf.
pub fn align_grounded(leaves: &[Vec<String>], sets: &[AbstractSetRecord], params: Bm25Params) -> Vec<Vec<Abstract>> {
    let mut out = vec![Vec::new(); leaves.len()];
    if leaves.is_empty() {
        return out;
    }
    let index = Bm25Index::new(leaves.iter().map(|p| tokens(&p.join(" "))), params);
    for set in sets.iter().filter(|s| !s.abstracts.is_empty()) {
        let target = leaves.iter().position(|l| *l == set.section_path).unwrap_or_else(|| {
            let query_text = std::iter::once(set.section_path.join(" "))
                .chain(set.abstracts.iter().map(|a| a.text.clone()))
                .collect::<Vec<_>>()
                .join(" ");
            match index.rank(&tokens(&query_text)).first() {
                Some(&(i, score)) if score > 0.0 => i,
                _ => {
                    let common = |l: &Vec<String>| l.iter().zip(&set.section_path).take_while(|(a, b)| a == b).count();
                    (0..leaves.len()).max_by(|&a, &b| common(&leaves[a]).cmp(&common(&leaves[b])).then(b.cmp(&a))).unwrap_or(0)
                }
            }
        });
        out[target].extend(set.abstracts.iter().cloned());
    }
    for abstracts in &mut out {
        let mut seen = HashSet::new();
        abstracts.retain(|a| seen.insert((a.source_url.clone(), a.text.clone())));
    }
    out
}

fn dedup_urls(abstracts: &[Abstract]) -> Vec<String> {
    let mut seen = HashSet::new();
    abstracts.iter().map(|a| a.source_url.clone()).filter(|u| seen.insert(u.clone())).collect()
}

fn write_section(
    topic: &str,
    path: &[String],
    abstracts: &[Abstract],
    warnings: Vec<String>,
    providers: &Providers,
    bank: &TemplateBank,
    cfg: &PipelineConfig,
) -> GeneratedSection {
    let mut section = GeneratedSection {
        heading_path: path.to_vec(),
        text: String::new(),
        citations: Vec::new(),
        retrieval_trace: dedup_urls(abstracts),
        question: None,
        warnings,
        error: None,
    };
    let req = QuestionRequest { topic: topic.to_string(), heading_path: path.to_vec(), paragraph: String::new() };
    let llm = providers.generator.as_ref();
    let result = (|| -> Result<String, AnnotatorError> {
        let question = generate_question(&req, llm, &cfg.gen)?;
        section.question = Some(question.clone());
        let prompt = if abstracts.is_empty() {
            DIRECT_SECTION_TEMPLATE.replace("{Question}", &question)
        } else {
            // Medium-bucket templates, picked per section.
            let template = select_template(300, bank, &req.record_id())?;
            render_prompt(template, abstracts, &question)?
        };
        llm.generate(&prompt, &cfg.gen).map_err(|source| AnnotatorError::Provider { generator: llm.id().to_string(), source })
    })();
    match result {
        Ok(text) => {
            section.text = text.trim().to_string();
            section.citations = section.retrieval_trace.clone();
        }
        Err(e) => {
            log::warn!("section `{}` failed: {e}", path.join(" - "));
            section.error = Some(format!("{}: {e}", e.rule_id()));
        }
    }
    section
}

/// Generates one article. Outline failures abort; a failing section is left
/// empty and flagged.
pub fn run_pipeline(
    topic: &str,
    mode: PipelineMode,
    cfg: &PipelineConfig,
    providers: &Providers,
    inputs: PipelineInputs<'_>,
) -> Result<GeneratedArticle, PipelineError> {
    if cfg.k == 0 {
        return Err(PipelineError::Precondition("k must be at least 1".into()));
    }
    match mode {
        PipelineMode::Local if inputs.index.is_none() => {
            return Err(PipelineError::Precondition("local mode needs an index".into()))
        }
        PipelineMode::Web if inputs.fetcher.is_none() => {
            return Err(PipelineError::Precondition("web mode needs a fetcher".into()))
        }
        PipelineMode::Grounded if inputs.grounded.is_none() => {
            return Err(PipelineError::Precondition("grounded mode needs reference abstracts".into()))
        }
        _ => {}
    }
    let bank = TemplateBank::default_bank();
    let outline = generate_outline(topic, cfg.lang, providers.generator.as_ref(), &cfg.gen)?;
    let leaves = outline.leaf_paths();
    let topic = outline.topic.clone();

    let retrieved: Vec<(Vec<Abstract>, Vec<String>)> = match mode {
        PipelineMode::Direct => vec![(Vec::new(), Vec::new()); leaves.len()],
        PipelineMode::Grounded => align_grounded(&leaves, inputs.grounded.unwrap_or_default(), cfg.bm25)
            .into_iter()
            .map(|a| (a, Vec::new()))
            .collect(),
        PipelineMode::Local | PipelineMode::Web => leaves
            .iter()
            .map(|path| {
                let query = format!("{topic} {}", path.join(" "));
                match (mode, inputs.index, inputs.fetcher) {
                    (PipelineMode::Local, Some(index), _) => Ok((retrieve_local(&query, index, cfg.k)?, Vec::new())),
                    (_, _, Some(fetcher)) => {
                        let web = retrieve_web(
                            &query,
                            providers.search.as_ref(),
                            fetcher,
                            providers.embedder.as_ref(),
                            cfg.k,
                            cfg.lang,
                            &cfg.web,
                        )?;
                        Ok((web.abstracts, web.warnings))
                    }
                    _ => unreachable!("inputs checked above"),
                }
            })
            .collect::<Result<_, PipelineError>>()?,
    };

    let sections: Vec<GeneratedSection> = leaves
        .par_iter()
        .zip(retrieved)
        .map(|(path, (abstracts, warnings))| write_section(&topic, path, &abstracts, warnings, providers, &bank, cfg))
        .collect();

    let mut models = BTreeMap::new();
    models.insert("generator".to_string(), providers.generator.id().to_string());
    if mode == PipelineMode::Web {
        models.insert("embedder".to_string(), providers.embedder.id().to_string());
        models.insert("search".to_string(), providers.search.id().to_string());
    }
    let hashed = PipelineConfig { timestamp: None, ..cfg.clone() };
    let provenance = ArticleProvenance {
        models,
        timestamp: cfg
            .timestamp
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        config_hash: sha256_hex(format!("{mode}:{}", to_sorted_json(&hashed)).as_bytes()),
        failed_sections: sections.iter().filter(|s| s.error.is_some()).count(),
    };
    Ok(GeneratedArticle { topic, mode, outline, sections, provenance })
}
