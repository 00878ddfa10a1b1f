use std::path::Path;
use std::sync::LazyLock;

use scraper::{ElementRef, Html, Selector};

use super::RetrieverError;
use crate::text::collapse_whitespace;

static BLOCKS: LazyLock<Selector> = LazyLock::new(|| Selector::parse("p, li, pre, blockquote, dd").expect("static selector"));
static TITLE: LazyLock<Selector> = LazyLock::new(|| Selector::parse("title").expect("static selector"));

const BOILERPLATE: &[&str] = &["nav", "script", "style", "header", "footer", "aside", "noscript", "form", "template"];
const BLOCK_TAGS: &[&str] = &["p", "li", "pre", "blockquote", "dd"];

/// Main text of a fetched body.
///
/// Plain text is returned unchanged. For HTML, the text of paragraph-like
/// blocks outside navigation and other boilerplate is returned in document
/// order, one block per `\n\n`-separated paragraph. Blocks nested inside
/// another block contribute through their ancestor only.
pub fn extract_main_text(body: &[u8], content_type: &str) -> Result<String, RetrieverError> {
    let ct = content_type.to_ascii_lowercase();
    let text = decode(body, &ct)?;
    let mime = ct.split(';').next().unwrap_or_default().trim();
    if mime.contains("html") {
        Ok(html_main_text(&text))
    } else if mime.is_empty() || mime.starts_with("text/") {
        Ok(text)
    } else {
        Err(RetrieverError::UnsupportedContentType(content_type.to_string()))
    }
}

fn decode(body: &[u8], content_type: &str) -> Result<String, RetrieverError> {
    let charset = content_type
        .split(';')
        .filter_map(|p| p.trim().strip_prefix("charset="))
        .map(|c| c.trim_matches('"').to_string())
        .next()
        .unwrap_or_else(|| "utf-8".to_string());
    match charset.as_str() {
        "utf-8" | "utf8" | "us-ascii" | "ascii" => String::from_utf8(body.to_vec()).map_err(|e| {
            RetrieverError::Encoding(format!("invalid UTF-8 at byte {}", e.utf8_error().valid_up_to()))
        }),
        "iso-8859-1" | "latin1" | "latin-1" => Ok(body.iter().map(|&b| b as char).collect()),
        other => Err(RetrieverError::Encoding(format!("unsupported charset `{other}`"))),
    }
}

fn html_main_text(html: &str) -> String {
    let doc = Html::parse_document(html);
    let mut blocks = Vec::new();
    for el in doc.select(&BLOCKS) {
        let mut skip = false;
        for anc in el.ancestors().filter_map(ElementRef::wrap) {
            let name = anc.value().name();
            if BOILERPLATE.contains(&name) || BLOCK_TAGS.contains(&name) {
                skip = true;
                break;
            }
        }
        if skip {
            continue;
        }
        let text = collapse_whitespace(&visible_text(el));
        if !text.is_empty() {
            blocks.push(text);
        }
    }
    blocks.join("\n\n")
}

fn visible_text(el: ElementRef<'_>) -> String {
    let mut out = String::new();
    for node in el.descendants() {
        if let Some(t) = node.value().as_text() {
            let hidden = node
                .ancestors()
                .filter_map(ElementRef::wrap)
                .any(|a| matches!(a.value().name(), "script" | "style" | "noscript" | "template"));
            if !hidden {
                out.push_str(t);
            }
        }
    }
    out
}

pub fn html_title(html: &str) -> Option<String> {
    let doc = Html::parse_document(html);
    let title = doc.select(&TITLE).next()?;
    Some(collapse_whitespace(&title.text().collect::<String>())).filter(|t| !t.is_empty())
}

/// Absolute `file://` URL for a local path.
pub fn path_to_file_url(path: &Path) -> Result<String, RetrieverError> {
    let abs = std::fs::canonicalize(path).map_err(|e| RetrieverError::BadPath(format!("{}: {e}", path.display())))?;
    reqwest::Url::from_file_path(&abs)
        .map(|u| u.to_string())
        .map_err(|_| RetrieverError::BadPath(abs.display().to_string()))
}
