//! Question-answer annotation: length-bucketed prompt templates, question
//! generation from a topic and heading path, and QA record assembly.

use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{check_record, Abstract, AbstractSetRecord, Provenance, QaRecord, Record, RecordError, RecordRules};
use crate::providers::{GenParams, Generator, ProviderError};
use crate::text::{char_len, collapse_whitespace, content_id, stable_hash64, word_count};

pub const ABSTRACTS_PLACEHOLDER: &str = "{Abstracts}";
pub const QUESTION_PLACEHOLDER: &str = "{Question}";

/// Instruction used to ask for a question about one heading of an article.
pub const QUESTION_INSTRUCTION: &str =
    "Given the topic {topic}, and the subtitle {subtitle}, please generate a question based on these two titles.";

/// Timestamp recorded in provenance when a run is seeded, so seeded runs are
/// byte-reproducible.
pub const FIXED_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

const PROMPT_1: &str = "{Abstracts}\nAnswer the following questions based on the provided references. Please provide detailed answers with a minimum of 300 words: {Question}";
const PROMPT_2: &str = "You cannot refuse to answer the question. Please refer to the following information:\n{Abstracts}\nAnswer the following questions. Please provide detailed answers with a minimum of 300 words: {Question}";
const PROMPT_3: &str = "Based on the provided references, answer the following questions. Please provide detailed answers with a minimum of 300 words:\n{Abstracts}\nQuestion: {Question}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthBucket {
    /// Fewer than 200 chars.
    Short,
    /// 200 to 400 chars inclusive.
    Medium,
    /// More than 400 chars.
    Long,
}

impl LengthBucket {
    pub fn of(len_chars: usize) -> Self {
        match len_chars {
            0..200 => Self::Short,
            200..=400 => Self::Medium,
            _ => Self::Long,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub length_bucket: LengthBucket,
    pub body: String,
    pub min_answer_words: usize,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), AnnotatorError> {
        for p in [ABSTRACTS_PLACEHOLDER, QUESTION_PLACEHOLDER] {
            let n = self.body.matches(p).count();
            if n != 1 {
                return Err(AnnotatorError::Template {
                    id: self.template_id.clone(),
                    message: format!("placeholder {p} appears {n} times, expected once"),
                });
            }
        }
        if self.min_answer_words == 0 {
            return Err(AnnotatorError::Template {
                id: self.template_id.clone(),
                message: "min_answer_words must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// True when the question follows a `Question:` marker rather than the
    /// closing instruction.
    pub fn has_question_marker(&self) -> bool {
        self.body.contains("Question: {Question}")
    }
}

/// A validated list of templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateBank {
    templates: Vec<PromptTemplate>,
}

impl TemplateBank {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self, AnnotatorError> {
        if templates.is_empty() {
            return Err(AnnotatorError::NoTemplate(None));
        }
        for t in &templates {
            t.validate()?;
        }
        Ok(Self { templates })
    }

    /// The three published templates in every bucket. Medium and long answers
    /// must reach 300 words, short ones 150.
    pub fn default_bank() -> Self {
        let mut templates = Vec::new();
        for (bucket, suffix, min) in [
            (LengthBucket::Short, "short", 150),
            (LengthBucket::Medium, "medium", 300),
            (LengthBucket::Long, "long", 300),
        ] {
            for (i, body) in [PROMPT_1, PROMPT_2, PROMPT_3].into_iter().enumerate() {
                templates.push(PromptTemplate {
                    template_id: format!("prompt{}-{suffix}", i + 1),
                    length_bucket: bucket,
                    body: body.to_string(),
                    min_answer_words: min,
                });
            }
        }
        Self { templates }
    }

    /// Reads a JSON list of templates.
    pub fn load(path: &Path) -> Result<Self, AnnotatorError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| AnnotatorError::Template { id: path.display().to_string(), message: e.to_string() })?;
        let templates: Vec<PromptTemplate> = serde_json::from_str(&raw)
            .map_err(|e| AnnotatorError::Template { id: path.display().to_string(), message: e.to_string() })?;
        Self::new(templates)
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }

    pub fn bucket(&self, bucket: LengthBucket) -> Vec<&PromptTemplate> {
        self.templates.iter().filter(|t| t.length_bucket == bucket).collect()
    }
}

impl Default for TemplateBank {
    fn default() -> Self {
        Self::default_bank()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRequest {
    pub topic: String,
    pub heading_path: Vec<String>,
    pub paragraph: String,
}

impl QuestionRequest {
    pub fn subtitle(&self) -> String {
        self.heading_path.join(" - ")
    }

    /// Record id shared with the abstract set built from the same paragraph,
    /// apart from the prefix.
    pub fn record_id(&self) -> String {
        content_id("qa", &self.topic, &self.heading_path, &self.paragraph)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotatorError {
    #[error("E_NO_TEMPLATE: no template for bucket {0:?}")]
    NoTemplate(Option<LengthBucket>),
    #[error("E_TEMPLATE: template `{id}`: {message}")]
    Template { id: String, message: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("E_BAD_QUESTION: generator reply `{0}` is not a question")]
    BadQuestion(String),
    #[error("E_SHORT_ANSWER: answer has {words} words, template requires {min}")]
    ShortAnswer { words: usize, min: usize },
    #[error("generator `{generator}` failed: {source}")]
    Provider {
        generator: String,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Record(#[from] RecordError),
}

impl AnnotatorError {
    pub fn rule_id(&self) -> &'static str {
        match self {
            Self::NoTemplate(_) => "E_NO_TEMPLATE",
            Self::Template { .. } => "E_TEMPLATE",
            Self::Precondition(_) => "E_PRECONDITION",
            Self::BadQuestion(_) => "E_BAD_QUESTION",
            Self::ShortAnswer { .. } => "E_SHORT_ANSWER",
            Self::Provider { .. } => "E_PROVIDER",
            Self::Record(e) => e.rule_id(),
        }
    }

    /// Rejections that drop one record without stopping the run.
    pub fn is_record_level(&self) -> bool {
        matches!(self, Self::BadQuestion(_) | Self::ShortAnswer { .. } | Self::Record(_))
    }
}

/// Picks a template from the bucket matching the paragraph length; within the
/// bucket the choice is a stable hash of `key`.
pub fn select_template<'a>(
    paragraph_len_chars: usize,
    bank: &'a TemplateBank,
    key: &str,
) -> Result<&'a PromptTemplate, AnnotatorError> {
    let bucket = LengthBucket::of(paragraph_len_chars);
    let candidates = bank.bucket(bucket);
    if candidates.is_empty() {
        return Err(AnnotatorError::NoTemplate(Some(bucket)));
    }
    let idx = (stable_hash64(key.as_bytes()) % candidates.len() as u64) as usize;
    Ok(candidates[idx])
}

/// `Abstract[1]: text` lines, one per abstract. Relevance, when known, is
/// shown after the label.
pub fn render_abstracts(abstracts: &[Abstract]) -> String {
    abstracts
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let text = collapse_whitespace(&a.text);
            match a.relevance {
                Some(r) => format!("Abstract[{}] (relevance {r:.2}): {text}", i + 1),
                None => format!("Abstract[{}]: {text}", i + 1),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_prompt(template: &PromptTemplate, abstracts: &[Abstract], question: &str) -> Result<String, AnnotatorError> {
    if abstracts.is_empty() {
        return Err(AnnotatorError::Precondition("no abstracts to render".into()));
    }
    if question.trim().is_empty() {
        return Err(AnnotatorError::Precondition("empty question".into()));
    }
    Ok(fill(&template.body, &render_abstracts(abstracts), question.trim()))
}

/// Substitutes both placeholders in one pass, so placeholder-like text inside
/// the substituted values is left alone.
fn fill(body: &str, abstracts: &str, question: &str) -> String {
    let mut out = String::with_capacity(body.len() + abstracts.len() + question.len());
    let mut rest = body;
    loop {
        let next = [(ABSTRACTS_PLACEHOLDER, abstracts), (QUESTION_PLACEHOLDER, question)]
            .into_iter()
            .filter_map(|(p, v)| rest.find(p).map(|i| (i, p, v)))
            .min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, p, v)) => {
                out.push_str(&rest[..i]);
                out.push_str(v);
                rest = &rest[i + p.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

static QUESTION_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*(?:question|q)\s*[:：]\s*").unwrap());

fn clean_question(reply: &str) -> Option<String> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = QUESTION_PREFIX.replace(line, "");
    let q = line.trim().trim_matches(|c| matches!(c, '"' | '“' | '”' | '\'')).trim().to_string();
    (!q.is_empty() && (q.ends_with('?') || q.ends_with('？'))).then_some(q)
}

pub fn question_prompt(req: &QuestionRequest) -> String {
    QUESTION_INSTRUCTION.replace("{topic}", &req.topic).replace("{subtitle}", &req.subtitle())
}

/// Asks the generator for one question about the request's heading. A reply
/// that is not a single question gets one retry with the next seed.
pub fn generate_question(req: &QuestionRequest, llm: &dyn Generator, params: &GenParams) -> Result<String, AnnotatorError> {
    if req.topic.trim().is_empty() || req.heading_path.is_empty() {
        return Err(AnnotatorError::Precondition("question request needs a topic and heading path".into()));
    }
    let prompt = question_prompt(req);
    let mut last = String::new();
    for attempt in 0..2u64 {
        let p = GenParams { seed: params.seed.wrapping_add(attempt), ..*params };
        last = llm.generate(&prompt, &p).map_err(|source| provider_err(llm, source))?;
        if let Some(q) = clean_question(&last) {
            return Ok(q);
        }
    }
    Err(AnnotatorError::BadQuestion(last.chars().take(120).collect()))
}

fn provider_err(llm: &dyn Generator, source: ProviderError) -> AnnotatorError {
    AnnotatorError::Provider { generator: llm.id().to_string(), source }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateOptions {
    pub gen: GenParams,
    /// Provenance timestamp; the current time when unset.
    pub timestamp: Option<String>,
    pub rules: RecordRules,
}

impl AnnotateOptions {
    /// Options for a reproducible run.
    pub fn seeded(seed: u64) -> Self {
        Self { gen: GenParams { seed, ..GenParams::default() }, timestamp: Some(FIXED_TIMESTAMP.into()), ..Self::default() }
    }
}

/// Generates a question, renders the selected template and asks for an
/// answer. An answer shorter than the template minimum gets one retry.
pub fn build_qa_pair(
    paragraph: &str,
    abstracts: &[Abstract],
    req: &QuestionRequest,
    llm: &dyn Generator,
    bank: &TemplateBank,
    opts: &AnnotateOptions,
) -> Result<QaRecord, AnnotatorError> {
    if abstracts.is_empty() {
        return Err(AnnotatorError::Precondition("a QA pair needs at least one abstract".into()));
    }
    let id = req.record_id();
    let template = select_template(char_len(paragraph), bank, &id)?;
    let question = generate_question(req, llm, &opts.gen)?;
    let prompt = render_prompt(template, abstracts, &question)?;
    let mut answer = String::new();
    let mut words = 0;
    for attempt in 0..2u64 {
        let p = GenParams { seed: opts.gen.seed.wrapping_add(attempt), ..opts.gen };
        answer = llm.generate(&prompt, &p).map_err(|source| provider_err(llm, source))?;
        words = word_count(&answer);
        if words >= template.min_answer_words {
            break;
        }
    }
    if words < template.min_answer_words {
        return Err(AnnotatorError::ShortAnswer { words, min: template.min_answer_words });
    }
    let record = QaRecord {
        id,
        topic: req.topic.clone(),
        heading_path: req.heading_path.clone(),
        question,
        answer: answer.trim().to_string(),
        abstracts: abstracts.to_vec(),
        template_id: template.template_id.clone(),
        provenance: Provenance {
            model: llm.id().to_string(),
            timestamp: opts
                .timestamp
                .clone()
                .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        },
    };
    let record = Record::Qa(record);
    check_record(&record, &opts.rules)?;
    match record {
        Record::Qa(r) => Ok(r),
        _ => unreachable!("constructed as a QA record"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotateOutput {
    pub records: Vec<QaRecord>,
    pub rejected: Vec<Rejection>,
    /// Abstract sets without abstracts, which cannot yield a QA pair.
    pub skipped: usize,
}

/// Annotates every abstract set that has abstracts. Record-level failures are
/// collected; provider failures abort the run.
pub fn annotate_records(
    sets: &[AbstractSetRecord],
    llm: &dyn Generator,
    bank: &TemplateBank,
    opts: &AnnotateOptions,
) -> Result<AnnotateOutput, AnnotatorError> {
    let usable: Vec<&AbstractSetRecord> = sets.iter().filter(|s| !s.abstracts.is_empty()).collect();
    let results: Vec<(String, Result<QaRecord, AnnotatorError>)> = usable
        .par_iter()
        .map(|s| {
            let req = QuestionRequest {
                topic: s.topic.clone(),
                heading_path: if s.section_path.is_empty() { vec![s.topic.clone()] } else { s.section_path.clone() },
                paragraph: s.paragraph.clone(),
            };
            (req.record_id(), build_qa_pair(&s.paragraph, &s.abstracts, &req, llm, bank, opts))
        })
        .collect();
    let mut out = AnnotateOutput { skipped: sets.len() - usable.len(), ..Default::default() };
    for (id, r) in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) if e.is_record_level() => {
                out.rejected.push(Rejection { id, rule: e.rule_id().to_string(), message: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
