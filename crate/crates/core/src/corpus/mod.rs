//! Dataset record kinds (outline, abstract set, question-answer), their
//! line-delimited JSON form, and the dataset validator.
//!
//! Records serialize with lexicographically ordered keys so two encodings of
//! the same record are byte-identical.

mod io;
mod validate;

pub use io::{read_jsonl, read_records, write_jsonl, Dataset, IoError};

pub use validate::{
    validate_dataset, DatasetError, DatasetPaths, DatasetStats, KindCounts, ValidationReport, Violation,
};

use std::collections::{BTreeMap, HashSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::text::{word_count, Lang};

pub const OUTLINE_FILE: &str = "outline.jsonl";
pub const ABSTRACT_SET_FILE: &str = "abstract_set.jsonl";
pub const QA_FILE: &str = "qa.jsonl";

/// Default minimum answer length, the shortest answer observed in the released corpus.
pub const DEFAULT_MIN_ANSWER_WORDS: usize = 150;

/// A heading in an outline tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadingNode {
    pub level: u32,
    pub text: String,
    pub path: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HeadingNode>,
}

/// One entry of a pre-order flattened outline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatHeading {
    pub level: u32,
    pub text: String,
    pub path: Vec<String>,
}

impl HeadingNode {
    pub fn leaf(level: u32, text: impl Into<String>, parent_path: &[String]) -> Self {
        let text = text.into();
        let mut path = parent_path.to_vec();
        path.push(text.clone());
        Self { level, text, path, children: Vec::new() }
    }

    /// Builds a forest from `(raw_level, text)` pairs in document order.
    ///
    /// A heading attaches to the nearest preceding heading with a smaller raw
    /// level, and its level becomes `parent.level + 1`, so skipped markup levels
    /// (`==` followed by `====`) still produce a well-formed tree. Roots get
    /// `base_level` and paths extend `base_path`.
    pub fn forest_from_levels(items: &[(u32, String)], base_level: u32, base_path: &[String]) -> Vec<HeadingNode> {
        struct Slot {
            level: u32,
            text: String,
            children: Vec<usize>,
        }
        let mut arena: Vec<Slot> = Vec::with_capacity(items.len());
        let mut roots = Vec::new();
        let mut stack: Vec<(u32, usize)> = Vec::new();
        for (raw, text) in items {
            while stack.last().is_some_and(|(r, _)| r >= raw) {
                stack.pop();
            }
            let idx = arena.len();
            let level = match stack.last() {
                Some(&(_, parent)) => arena[parent].level + 1,
                None => base_level,
            };
            arena.push(Slot { level, text: text.clone(), children: Vec::new() });
            match stack.last() {
                Some(&(_, parent)) => arena[parent].children.push(idx),
                None => roots.push(idx),
            }
            stack.push((*raw, idx));
        }
        fn build(arena: &[Slot], idx: usize, parent_path: &[String]) -> HeadingNode {
            let slot = &arena[idx];
            let mut node = HeadingNode::leaf(slot.level, slot.text.clone(), parent_path);
            node.children = slot.children.iter().map(|&c| build(arena, c, &node.path)).collect();
            node
        }
        roots.into_iter().map(|r| build(&arena, r, base_path)).collect()
    }

    /// Pre-order walk including `self`.
    pub fn walk(&self) -> Vec<&HeadingNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    pub fn find(&self, path: &[String]) -> Option<&HeadingNode> {
        self.walk().into_iter().find(|n| n.path == path)
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Pre-order flattening of a forest.
pub fn flatten(roots: &[HeadingNode]) -> Vec<FlatHeading> {
    roots
        .iter()
        .flat_map(|r| r.walk())
        .map(|n| FlatHeading { level: n.level, text: n.text.clone(), path: n.path.clone() })
        .collect()
}

/// Inverse of [`flatten`] for lists whose roots sit at level 1.
pub fn unflatten(flat: &[FlatHeading]) -> Result<Vec<HeadingNode>, RecordError> {
    check_heading_list(flat)?;
    let items: Vec<(u32, String)> = flat.iter().map(|h| (h.level, h.text.clone())).collect();
    Ok(HeadingNode::forest_from_levels(&items, 1, &[]))
}

fn check_heading_list(flat: &[FlatHeading]) -> Result<(), RecordError> {
    if flat.is_empty() {
        return Err(RecordError::NoHeadings);
    }
    let mut stack: Vec<&FlatHeading> = Vec::new();
    for h in flat {
        if h.text.trim().is_empty() {
            return Err(RecordError::EmptyHeading);
        }
        let max_level = stack.last().map_or(1, |p| p.level + 1);
        if h.level == 0 || h.level > max_level {
            return Err(RecordError::HeadingLevel { text: h.text.clone(), level: h.level });
        }
        stack.truncate(h.level as usize - 1);
        let mut expected: Vec<String> = stack.last().map(|p| p.path.clone()).unwrap_or_default();
        expected.push(h.text.clone());
        if h.path != expected {
            return Err(RecordError::HeadingPath { text: h.text.clone() });
        }
        stack.push(h);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineRecord {
    pub id: String,
    pub topic: String,
    pub lang: Lang,
    pub headings: Vec<FlatHeading>,
    pub source_url: String,
}

impl OutlineRecord {
    pub fn tree(&self) -> Result<Vec<HeadingNode>, RecordError> {
        unflatten(&self.headings)
    }

    /// Full heading paths joined by `" - "`.
    pub fn path_strings(&self) -> Vec<String> {
        self.headings.iter().map(|h| h.path.join(" - ")).collect()
    }

    pub fn leaf_paths(&self) -> Vec<Vec<String>> {
        self.headings
            .iter()
            .enumerate()
            .filter(|(i, h)| self.headings.get(i + 1).is_none_or(|next| next.level <= h.level))
            .map(|(_, h)| h.path.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// A summary distilled from one cited source: selected sentences joined in
/// source order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abstract {
    pub text: String,
    pub source_url: String,
    pub source_sentence_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractSetRecord {
    pub id: String,
    pub article_id: String,
    pub topic: String,
    pub section_path: Vec<String>,
    pub paragraph: String,
    pub citations: Vec<Citation>,
    pub abstracts: Vec<Abstract>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub topic: String,
    pub heading_path: Vec<String>,
    pub question: String,
    pub answer: String,
    pub abstracts: Vec<Abstract>,
    pub template_id: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Outline,
    AbstractSet,
    Qa,
}

impl RecordKind {
    pub const ALL: [RecordKind; 3] = [RecordKind::Outline, RecordKind::AbstractSet, RecordKind::Qa];

    pub fn file_name(self) -> &'static str {
        match self {
            RecordKind::Outline => OUTLINE_FILE,
            RecordKind::AbstractSet => ABSTRACT_SET_FILE,
            RecordKind::Qa => QA_FILE,
        }
    }

    fn required_fields(self) -> &'static [&'static str] {
        match self {
            RecordKind::Outline => &["headings", "id", "lang", "source_url", "topic"],
            RecordKind::AbstractSet => {
                &["abstracts", "article_id", "citations", "id", "paragraph", "section_path", "topic"]
            }
            RecordKind::Qa => &[
                "abstracts",
                "answer",
                "heading_path",
                "id",
                "provenance",
                "question",
                "template_id",
                "topic",
            ],
        }
    }

    /// Guesses the kind of a decoded JSON object from its distinguishing keys.
    pub fn sniff(value: &Value) -> Option<RecordKind> {
        let obj = value.as_object()?;
        if obj.contains_key("headings") {
            Some(RecordKind::Outline)
        } else if obj.contains_key("question") || obj.contains_key("answer") {
            Some(RecordKind::Qa)
        } else if obj.contains_key("paragraph") {
            Some(RecordKind::AbstractSet)
        } else {
            None
        }
    }
}

impl std::fmt::Display for RecordKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecordKind::Outline => "outline",
            RecordKind::AbstractSet => "abstract_set",
            RecordKind::Qa => "qa",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Record {
    Outline(OutlineRecord),
    AbstractSet(AbstractSetRecord),
    Qa(QaRecord),
}

impl Record {
    pub fn kind(&self) -> RecordKind {
        match self {
            Record::Outline(_) => RecordKind::Outline,
            Record::AbstractSet(_) => RecordKind::AbstractSet,
            Record::Qa(_) => RecordKind::Qa,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Record::Outline(r) => &r.id,
            Record::AbstractSet(r) => &r.id,
            Record::Qa(r) => &r.id,
        }
    }

    pub fn topic(&self) -> &str {
        match self {
            Record::Outline(r) => &r.topic,
            Record::AbstractSet(r) => &r.topic,
            Record::Qa(r) => &r.topic,
        }
    }
}

impl From<OutlineRecord> for Record {
    fn from(r: OutlineRecord) -> Self {
        Record::Outline(r)
    }
}

impl From<AbstractSetRecord> for Record {
    fn from(r: AbstractSetRecord) -> Self {
        Record::AbstractSet(r)
    }
}

impl From<QaRecord> for Record {
    fn from(r: QaRecord) -> Self {
        Record::Qa(r)
    }
}

/// Record-level failure; each variant carries a stable rule id.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("E_JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("E_MISSING_FIELD({0})")]
    MissingField(String),
    #[error("E_TYPE: {0}")]
    Type(String),
    #[error("E_KIND_MISMATCH: expected {expected}, found {found}")]
    KindMismatch { expected: RecordKind, found: RecordKind },
    #[error("E_EMPTY_HEADING")]
    EmptyHeading,
    #[error("E_NO_HEADINGS")]
    NoHeadings,
    #[error("E_HEADING_LEVEL: `{text}` at level {level}")]
    HeadingLevel { text: String, level: u32 },
    #[error("E_HEADING_PATH: `{text}`")]
    HeadingPath { text: String },
    #[error("E_EMPTY_FIELD({0})")]
    EmptyField(String),
    #[error("E_ABSTRACT_URL: {0} not among citations")]
    AbstractUrl(String),
    #[error("E_ABSTRACT_INDICES: indices must be strictly ascending")]
    AbstractIndices,
    #[error("E_RELEVANCE_RANGE: {0}")]
    RelevanceRange(f64),
    #[error("E_NO_ABSTRACTS")]
    NoAbstracts,
    #[error("E_SHORT_ANSWER: {words} words, minimum {min}")]
    ShortAnswer { words: usize, min: usize },
}

impl RecordError {
    pub fn rule_id(&self) -> &'static str {
        match self {
            RecordError::Json { .. } => "E_JSON",
            RecordError::MissingField(_) => "E_MISSING_FIELD",
            RecordError::Type(_) => "E_TYPE",
            RecordError::KindMismatch { .. } => "E_KIND_MISMATCH",
            RecordError::EmptyHeading => "E_EMPTY_HEADING",
            RecordError::NoHeadings => "E_NO_HEADINGS",
            RecordError::HeadingLevel { .. } => "E_HEADING_LEVEL",
            RecordError::HeadingPath { .. } => "E_HEADING_PATH",
            RecordError::EmptyField(_) => "E_EMPTY_FIELD",
            RecordError::AbstractUrl(_) => "E_ABSTRACT_URL",
            RecordError::AbstractIndices => "E_ABSTRACT_INDICES",
            RecordError::RelevanceRange(_) => "E_RELEVANCE_RANGE",
            RecordError::NoAbstracts => "E_NO_ABSTRACTS",
            RecordError::ShortAnswer { .. } => "E_SHORT_ANSWER",
        }
    }
}

/// Invariant thresholds that are configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordRules {
    pub min_answer_words: usize,
}

impl Default for RecordRules {
    fn default() -> Self {
        Self { min_answer_words: DEFAULT_MIN_ANSWER_WORDS }
    }
}

fn check_abstracts(abstracts: &[Abstract]) -> Result<(), RecordError> {
    for a in abstracts {
        if a.source_sentence_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RecordError::AbstractIndices);
        }
        if let Some(r) = a.relevance {
            if !(0.0..=1.0).contains(&r) {
                return Err(RecordError::RelevanceRange(r));
            }
        }
    }
    Ok(())
}

pub fn check_record(record: &Record, rules: &RecordRules) -> Result<(), RecordError> {
    match record {
        Record::Outline(r) => check_heading_list(&r.headings),
        Record::AbstractSet(r) => {
            let urls: HashSet<&str> = r.citations.iter().map(|c| c.url.as_str()).collect();
            if let Some(a) = r.abstracts.iter().find(|a| !urls.contains(a.source_url.as_str())) {
                return Err(RecordError::AbstractUrl(a.source_url.clone()));
            }
            check_abstracts(&r.abstracts)
        }
        Record::Qa(r) => {
            if r.question.trim().is_empty() {
                return Err(RecordError::EmptyField("question".into()));
            }
            if r.abstracts.is_empty() {
                return Err(RecordError::NoAbstracts);
            }
            check_abstracts(&r.abstracts)?;
            let words = word_count(&r.answer);
            if words < rules.min_answer_words {
                return Err(RecordError::ShortAnswer { words, min: rules.min_answer_words });
            }
            Ok(())
        }
    }
}

/// Encodes a record as one JSON line with sorted keys, refusing records that
/// break their invariants.
pub fn encode_record(record: &Record) -> Result<String, RecordError> {
    encode_record_with(record, &RecordRules::default())
}

pub fn encode_record_with(record: &Record, rules: &RecordRules) -> Result<String, RecordError> {
    check_record(record, rules)?;
    Ok(to_sorted_json(record))
}

/// Serializes any value to a single JSON line with lexicographic key order.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    // Value's map is a BTreeMap, so the round trip sorts keys at every depth.
    let v = serde_json::to_value(value).expect("record types always serialize");
    serde_json::to_string(&v).expect("json values always serialize")
}

pub fn to_sorted_json_pretty<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("record types always serialize");
    serde_json::to_string_pretty(&v).expect("json values always serialize")
}

/// Decoder with a configurable key-mapping table for external files whose keys
/// differ from ours (`external -> internal`, applied to top-level keys).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Decoder {
    pub rules: RecordRules,
    pub key_map: BTreeMap<String, String>,
}

impl Decoder {
    pub fn parse_value(&self, line: &str) -> Result<Value, RecordError> {
        let mut value: Value = serde_json::from_str(line).map_err(|e| RecordError::Json {
            offset: byte_offset(line, e.line(), e.column()),
            message: e.to_string(),
        })?;
        if let Some(obj) = value.as_object_mut() {
            for (from, to) in &self.key_map {
                if let Some(v) = obj.remove(from) {
                    obj.insert(to.clone(), v);
                }
            }
        }
        Ok(value)
    }

    pub fn decode(&self, line: &str, kind: RecordKind) -> Result<Record, RecordError> {
        let value = self.parse_value(line)?;
        self.decode_value(value, kind)
    }

    pub fn decode_value(&self, value: Value, kind: RecordKind) -> Result<Record, RecordError> {
        let obj = value.as_object().ok_or_else(|| RecordError::Type("record is not a JSON object".into()))?;
        if let Some(found) = RecordKind::sniff(&value) {
            if found != kind {
                return Err(RecordError::KindMismatch { expected: kind, found });
            }
        }
        if let Some(missing) = kind.required_fields().iter().find(|f| !obj.contains_key(**f)) {
            return Err(RecordError::MissingField((*missing).to_string()));
        }
        let record = match kind {
            RecordKind::Outline => Record::Outline(typed(value)?),
            RecordKind::AbstractSet => Record::AbstractSet(typed(value)?),
            RecordKind::Qa => Record::Qa(typed(value)?),
        };
        check_record(&record, &self.rules)?;
        Ok(record)
    }
}

fn typed<T: DeserializeOwned>(value: Value) -> Result<T, RecordError> {
    serde_json::from_value(value).map_err(|e| RecordError::Type(e.to_string()))
}

/// Byte offset just past the last byte the parser consumed.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column).min(text.len())
}

pub fn decode_record(line: &str, kind: RecordKind) -> Result<Record, RecordError> {
    Decoder::default().decode(line, kind)
}
