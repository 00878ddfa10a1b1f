//! Article mining: parse wikitext or rendered HTML into a heading tree,
//! sectioned paragraphs and citation markers, then derive outline records
//! and per-section citation lists.

mod html;
mod wikitext;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{flatten, HeadingNode, OutlineRecord};
use crate::text::{content_id, word_count, Lang};

/// Parsed articles, one per line, kept next to the dataset for the
/// richness check.
pub const ARTICLES_FILE: &str = "articles.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Wikitext,
    Html,
}

impl SourceFormat {
    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "wiki" | "wikitext" | "mediawiki" => Some(Self::Wikitext),
            "html" | "htm" => Some(Self::Html),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub topic: String,
    pub lang: Lang,
    pub body: String,
    pub format: SourceFormat,
    #[serde(default)]
    pub source_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    /// Full heading path, starting with the article title.
    pub path: Vec<String>,
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationMarker {
    pub heading_path: Vec<String>,
    pub paragraph_index: usize,
    /// Char offset in the paragraph where the marker stood.
    pub char_offset: usize,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedArticle {
    pub topic: String,
    pub lang: Lang,
    pub source_url: String,
    /// Level 1 is the article title; its children are the top sections.
    pub root: HeadingNode,
    /// Sections in document order. The title section appears only when the
    /// lead has paragraphs.
    pub sections: Vec<Section>,
    pub citation_markers: Vec<CitationMarker>,
    /// Markers whose URL could not be resolved.
    pub dropped_citations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleCitation {
    pub heading_path: Vec<String>,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum MinerError {
    #[error("E_NO_STRUCTURE: article `{0}` has no headings")]
    NoStructure(String),
    #[error("E_EMPTY_BODY: article `{0}` has an empty body")]
    EmptyBody(String),
    #[error("E_FORMAT: unsupported source format for {0}")]
    UnsupportedFormat(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl MinerError {
    pub fn rule_id(&self) -> &'static str {
        match self {
            Self::NoStructure(_) => "E_NO_STRUCTURE",
            Self::EmptyBody(_) => "E_EMPTY_BODY",
            Self::UnsupportedFormat(_) => "E_FORMAT",
            Self::Io { .. } => "E_IO",
            Self::Manifest { .. } => "E_MANIFEST",
        }
    }
}

/// A heading and the paragraphs under it, before tree assembly. Paragraph
/// markers are `(char_offset, url, title)`.
pub(crate) struct RawSection {
    pub level: u32,
    pub text: String,
    pub paragraphs: Vec<RawParagraph>,
}

#[derive(Default)]
pub(crate) struct RawParagraph {
    pub text: String,
    pub markers: Vec<(usize, String, Option<String>)>,
}

pub fn parse_article(doc: &SourceDocument) -> Result<ParsedArticle, MinerError> {
    if doc.body.trim().is_empty() {
        return Err(MinerError::EmptyBody(doc.topic.clone()));
    }
    let (lead, sections, dropped) = match doc.format {
        SourceFormat::Wikitext => wikitext::parse(&doc.body),
        SourceFormat::Html => html::parse(&doc.body),
    };
    if sections.is_empty() {
        return Err(MinerError::NoStructure(doc.topic.clone()));
    }
    assemble(doc, lead, sections, dropped)
}

fn assemble(
    doc: &SourceDocument,
    lead: Vec<RawParagraph>,
    raw: Vec<RawSection>,
    dropped: usize,
) -> Result<ParsedArticle, MinerError> {
    let title_path = vec![doc.topic.clone()];
    let items: Vec<(u32, String)> = raw.iter().map(|s| (s.level, s.text.clone())).collect();
    let children = HeadingNode::forest_from_levels(&items, 2, &title_path);
    let root = HeadingNode { level: 1, text: doc.topic.clone(), path: title_path.clone(), children };

    let mut sections = Vec::new();
    let mut markers = Vec::new();
    let mut push_section = |path: Vec<String>, paragraphs: Vec<RawParagraph>| {
        let mut texts = Vec::new();
        for (i, p) in paragraphs.into_iter().enumerate() {
            for (offset, url, title) in p.markers {
                markers.push(CitationMarker { heading_path: path.clone(), paragraph_index: i, char_offset: offset, url, title });
            }
            texts.push(p.text);
        }
        sections.push(Section { path, paragraphs: texts });
    };
    if !lead.is_empty() {
        push_section(title_path, lead);
    }
    // Pre-order walk visits headings in the order they were supplied.
    let nodes: Vec<Vec<String>> = root.children.iter().flat_map(|c| c.walk()).map(|n| n.path.clone()).collect();
    for (path, section) in nodes.into_iter().zip(raw) {
        push_section(path, section.paragraphs);
    }
    Ok(ParsedArticle {
        topic: doc.topic.clone(),
        lang: doc.lang,
        source_url: doc.source_url.clone(),
        root,
        sections,
        citation_markers: markers,
        dropped_citations: dropped,
    })
}

impl ParsedArticle {
    /// Id shared by the article's outline record and its abstract sets.
    pub fn article_id(&self) -> String {
        content_id("ol", &self.topic, &[], "")
    }

    /// Total words across all paragraphs.
    pub fn word_count(&self) -> usize {
        self.sections.iter().flat_map(|s| &s.paragraphs).map(|p| word_count(p)).sum()
    }

    pub fn distinct_citation_urls(&self) -> usize {
        self.citation_markers.iter().map(|m| m.url.as_str()).collect::<HashSet<_>>().len()
    }

    pub fn section(&self, path: &[String]) -> Option<&Section> {
        self.sections.iter().find(|s| s.path == path)
    }
}

/// Drops the leading title from a full heading path.
pub fn relative_path(path: &[String]) -> Vec<String> {
    path.iter().skip(1).cloned().collect()
}

/// The article's heading tree without the title node: top sections become
/// level 1 and paths no longer start with the title.
pub fn extract_outline(article: &ParsedArticle) -> OutlineRecord {
    fn rebase(node: &HeadingNode) -> HeadingNode {
        HeadingNode {
            level: node.level - 1,
            text: node.text.clone(),
            path: relative_path(&node.path),
            children: node.children.iter().map(rebase).collect(),
        }
    }
    let roots: Vec<HeadingNode> = article.root.children.iter().map(rebase).collect();
    OutlineRecord {
        id: article.article_id(),
        topic: article.topic.clone(),
        lang: article.lang,
        headings: flatten(&roots),
        source_url: article.source_url.clone(),
    }
}

/// Citations deduplicated by `(heading_path, url)`, in first-occurrence order.
pub fn extract_citations(article: &ParsedArticle) -> Vec<ArticleCitation> {
    let mut seen = HashSet::new();
    article
        .citation_markers
        .iter()
        .filter(|m| seen.insert((m.heading_path.clone(), m.url.clone())))
        .map(|m| ArticleCitation { heading_path: m.heading_path.clone(), url: m.url.clone(), title: m.title.clone() })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestEntry {
    topic: String,
    path: PathBuf,
    #[serde(default)]
    lang: Option<Lang>,
    #[serde(default)]
    format: Option<SourceFormat>,
    #[serde(default)]
    source_url: Option<String>,
}

/// Reads a manifest, either a JSON object mapping topic to path or a list of
/// `{topic, path, lang?, format?, source_url?}` entries. Relative paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: &Path, default_lang: Lang) -> Result<Vec<SourceDocument>, MinerError> {
    let bad = |message: String| MinerError::Manifest { path: path.to_path_buf(), message };
    let raw = std::fs::read_to_string(path).map_err(|source| MinerError::Io { path: path.to_path_buf(), source })?;
    let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| bad(e.to_string()))?;
    let entries: Vec<ManifestEntry> = match value {
        serde_json::Value::Object(map) => map
            .into_iter()
            .map(|(topic, p)| {
                let p = p.as_str().ok_or_else(|| bad(format!("path for `{topic}` is not a string")))?;
                Ok(ManifestEntry { topic, path: PathBuf::from(p), lang: None, format: None, source_url: None })
            })
            .collect::<Result<_, MinerError>>()?,
        other => serde_json::from_value(other).map_err(|e| bad(e.to_string()))?,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let file = base.join(&e.path);
            let format = e
                .format
                .or_else(|| SourceFormat::from_path(&file))
                .ok_or_else(|| MinerError::UnsupportedFormat(file.display().to_string()))?;
            let body =
                std::fs::read_to_string(&file).map_err(|source| MinerError::Io { path: file.clone(), source })?;
            Ok(SourceDocument {
                topic: e.topic,
                lang: e.lang.unwrap_or(default_lang),
                body,
                format,
                source_url: e.source_url.unwrap_or_else(|| e.path.display().to_string()),
            })
        })
        .collect()
}

/// Every `.wiki` / `.html` file in `dir`, sorted by name; the topic is the
/// file stem with underscores read as spaces.
pub fn load_dir(dir: &Path, lang: Lang) -> Result<Vec<SourceDocument>, MinerError> {
    let io = |source| MinerError::Io { path: dir.to_path_buf(), source };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| SourceFormat::from_path(p).is_some())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|file| {
            let body =
                std::fs::read_to_string(&file).map_err(|source| MinerError::Io { path: file.clone(), source })?;
            let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            Ok(SourceDocument {
                topic: stem.replace('_', " "),
                lang,
                body,
                format: SourceFormat::from_path(&file).expect("filtered above"),
                source_url: file.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
            })
        })
        .collect()
}

const MARK: char = '\u{E000}';

/// Builds a paragraph from text pieces and citation markers: whitespace is
/// collapsed, a space left dangling by a removed marker is dropped, and each
/// marker becomes a char offset into the cleaned text.
pub(crate) fn finish_paragraph(pieces: Vec<Piece>) -> RawParagraph {
    let mut raw = String::new();
    let mut payloads = Vec::new();
    for piece in pieces {
        match piece {
            Piece::Text(t) => raw.extend(t.chars().map(|c| if c == MARK { ' ' } else { c })),
            Piece::Marker(url, title) => {
                raw.push(MARK);
                payloads.push((url, title));
            }
        }
    }
    let chars: Vec<char> = raw.split_whitespace().collect::<Vec<_>>().join(" ").chars().collect();
    let mut text = String::new();
    let mut len = 0usize;
    let mut markers = Vec::new();
    let mut payloads = payloads.into_iter();
    for (i, &c) in chars.iter().enumerate() {
        if c == MARK {
            let (url, title) = payloads.next().expect("one payload per marker");
            markers.push((len, url, title));
            continue;
        }
        if c == ' ' {
            let next = chars[i + 1..].iter().find(|&&n| n != MARK);
            let before_marker = chars.get(i + 1) == Some(&MARK);
            let dangling = before_marker && next.is_none_or(|&n| n == ' ' || is_closing_punct(n));
            if text.is_empty() || text.ends_with(' ') || dangling {
                continue;
            }
        }
        text.push(c);
        len += 1;
    }
    RawParagraph { text, markers }
}

fn is_closing_punct(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | ')' | '。' | '，' | '；' | '：' | '！' | '？' | '）' | '、')
}

pub(crate) enum Piece {
    Text(String),
    Marker(String, Option<String>),
}
