//! A pragmatic wikitext reader: headings, prose paragraphs and `<ref>`
//! citations. Templates, tables, galleries and file/category links are
//! dropped rather than expanded.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::{Captures, Regex};

use super::{finish_paragraph, Piece, RawParagraph, RawSection};

const OPEN: char = '\u{E001}';
const CLOSE: char = '\u{E002}';

static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<ref\b([^>]*?)(?:/>|>(.*?)</ref\s*>)").unwrap());
static REF_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\bname\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s/>]+))"#).unwrap());
static PARAM_URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\|\s*url\s*=\s*([^|}\s]+)").unwrap());
static PARAM_TITLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\|\s*title\s*=\s*([^|}]+)").unwrap());
static EXT_LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[((?:https?://|file:)[^\s\]]+)(?:\s+([^\]]+))?\]").unwrap());
static BARE_URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:https?://|file:)[^\s<|}\]]+").unwrap());
static GALLERY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<gallery\b.*?</gallery\s*>").unwrap());
static BR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<br\s*/?>").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^>]*>").unwrap());
static HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(={1,6})\s*(.+?)\s*=+\s*$").unwrap());
static PIPED_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\[[^\[\]|]*\|([^\[\]]*)\]\]").unwrap());
static PLAIN_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\[([^\[\]|]*)\]\]").unwrap());
static EMPHASIS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"'{2,5}").unwrap());
static MAGIC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"__[A-Z]+__").unwrap());
static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new("\u{E001}(\\d+)\u{E002}").unwrap());

const DROPPED_LINK_PREFIXES: &[&str] = &["file:", "image:", "category:", "文件:", "图像:", "分类:", "檔案:", "分類:"];

/// Lead paragraphs, sections in document order, and the count of citations
/// without a resolvable URL.
pub(crate) fn parse(body: &str) -> (Vec<RawParagraph>, Vec<RawSection>, usize) {
    let text = COMMENT.replace_all(body, "");
    let (text, refs, mut dropped) = replace_refs(&text);
    let text = GALLERY.replace_all(&text, "");
    let text = strip_nested(&text);
    let text = strip_dropped_links(&text);
    let text = BR.replace_all(&text, " ");
    let text = TAG.replace_all(&text, "");

    let mut lead = Vec::new();
    let mut sections: Vec<RawSection> = Vec::new();
    let mut buffer: Vec<String> = Vec::new();

    let flush = |buffer: &mut Vec<String>, sections: &mut Vec<RawSection>, lead: &mut Vec<RawParagraph>| {
        if buffer.is_empty() {
            return;
        }
        let joined = buffer.join(" ");
        buffer.clear();
        let p = to_paragraph(&joined, &refs);
        if p.text.is_empty() {
            return;
        }
        match sections.last_mut() {
            Some(s) => s.paragraphs.push(p),
            None => lead.push(p),
        }
    };

    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(c) = HEADING.captures(trimmed) {
            let level = c[1].len() as u32;
            let heading = to_paragraph(&c[2], &refs);
            if !heading.text.is_empty() {
                flush(&mut buffer, &mut sections, &mut lead);
                // Refs inside headings have nowhere to attach.
                dropped += heading.markers.len();
                sections.push(RawSection { level, text: heading.text, paragraphs: Vec::new() });
                continue;
            }
        }
        if trimmed.is_empty() || trimmed.starts_with("----") {
            flush(&mut buffer, &mut sections, &mut lead);
            continue;
        }
        let content = trimmed.trim_start_matches(['*', '#', ':', ';']).trim();
        if !content.is_empty() {
            buffer.push(content.to_string());
        }
    }
    flush(&mut buffer, &mut sections, &mut lead);
    (lead, sections, dropped)
}

type RefTable = Vec<(String, Option<String>)>;

/// Swaps each resolvable `<ref>` for a private-use placeholder indexing into
/// the returned table.
fn replace_refs(text: &str) -> (String, RefTable, usize) {
    let name_of = |attrs: &str| {
        REF_NAME.captures(attrs).and_then(|c| c.get(1).or(c.get(2)).or(c.get(3))).map(|m| m.as_str().to_string())
    };
    // Named refs may be defined after their first reuse.
    let mut named: HashMap<String, (String, Option<String>)> = HashMap::new();
    for c in REF.captures_iter(text) {
        if let (Some(name), Some(content)) = (name_of(&c[1]), c.get(2)) {
            if let Some(resolved) = resolve_ref(content.as_str()) {
                named.entry(name).or_insert(resolved);
            }
        }
    }
    let mut table: RefTable = Vec::new();
    let mut dropped = 0;
    let out = REF.replace_all(text, |c: &Captures| {
        let resolved = match c.get(2) {
            Some(content) => resolve_ref(content.as_str()),
            None => name_of(&c[1]).and_then(|n| named.get(&n).cloned()),
        };
        match resolved {
            Some(r) => {
                table.push(r);
                format!("{OPEN}{}{CLOSE}", table.len() - 1)
            }
            None => {
                dropped += 1;
                String::new()
            }
        }
    });
    (out.into_owned(), table, dropped)
}

fn resolve_ref(content: &str) -> Option<(String, Option<String>)> {
    let clean_title = |t: &str| Some(clean_inline(t).trim().to_string()).filter(|t| !t.is_empty());
    if let Some(url) = PARAM_URL.captures(content) {
        let title = PARAM_TITLE.captures(content).and_then(|t| clean_title(&t[1]));
        return Some((url[1].to_string(), title));
    }
    if let Some(link) = EXT_LINK.captures(content) {
        return Some((link[1].to_string(), link.get(2).and_then(|t| clean_title(t.as_str()))));
    }
    BARE_URL.find(content).map(|m| (m.as_str().to_string(), None))
}

/// Removes `{{templates}}` and `{| tables |}`, both possibly nested.
fn strip_nested(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut templates = 0usize;
    let mut tables = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let pair = (chars[i], chars.get(i + 1).copied().unwrap_or('\0'));
        match pair {
            ('{', '{') => {
                templates += 1;
                i += 2;
            }
            ('}', '}') if templates > 0 => {
                templates -= 1;
                i += 2;
            }
            ('{', '|') => {
                tables += 1;
                i += 2;
            }
            ('|', '}') if tables > 0 => {
                tables -= 1;
                i += 2;
            }
            _ => {
                if templates == 0 && tables == 0 {
                    out.push(chars[i]);
                }
                i += 1;
            }
        }
    }
    out
}

/// Removes `[[File:...]]`, `[[Image:...]]` and `[[Category:...]]` links,
/// including captions with nested links.
fn strip_dropped_links(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '[' && chars.get(i + 1) == Some(&'[') {
            let head: String = chars[i + 2..].iter().take(12).collect::<String>().to_lowercase();
            let head = head.trim_start();
            if DROPPED_LINK_PREFIXES.iter().any(|p| head.starts_with(p)) {
                let mut depth = 0usize;
                let mut j = i;
                while j < chars.len() {
                    if chars[j] == '[' && chars.get(j + 1) == Some(&'[') {
                        depth += 1;
                        j += 2;
                    } else if chars[j] == ']' && chars.get(j + 1) == Some(&']') {
                        depth -= 1;
                        j += 2;
                        if depth == 0 {
                            break;
                        }
                    } else {
                        j += 1;
                    }
                }
                i = j;
                continue;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn clean_inline(text: &str) -> String {
    let t = PIPED_LINK.replace_all(text, "$1");
    let t = PLAIN_LINK.replace_all(&t, "$1");
    let t = EXT_LINK.replace_all(&t, |c: &Captures| c.get(2).map_or(String::new(), |m| m.as_str().to_string()));
    let t = EMPHASIS.replace_all(&t, "");
    let t = MAGIC.replace_all(&t, "");
    t.replace("&nbsp;", " ")
        .replace("&ndash;", "–")
        .replace("&mdash;", "—")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&amp;", "&")
}

fn to_paragraph(raw: &str, refs: &RefTable) -> RawParagraph {
    let cleaned = clean_inline(raw);
    let mut pieces = Vec::new();
    let mut last = 0;
    for c in MARKER.captures_iter(&cleaned) {
        let m = c.get(0).expect("whole match");
        pieces.push(Piece::Text(cleaned[last..m.start()].to_string()));
        let idx: usize = c[1].parse().expect("digits");
        let (url, title) = refs[idx].clone();
        pieces.push(Piece::Marker(url, title));
        last = m.end();
    }
    pieces.push(Piece::Text(cleaned[last..].to_string()));
    finish_paragraph(pieces)
}
