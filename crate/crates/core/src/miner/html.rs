//! Rendered-page reader: `h2`–`h6` headings, `p` paragraphs, and
//! `sup` reference markers resolved through the page's reference list.

use std::collections::HashMap;
use std::sync::LazyLock;

use scraper::{ElementRef, Html, Node, Selector};

use super::{finish_paragraph, Piece, RawParagraph, RawSection};
use crate::text::collapse_whitespace;

static FLOW: LazyLock<Selector> = LazyLock::new(|| Selector::parse("h2, h3, h4, h5, h6, p").unwrap());
static WITH_ID: LazyLock<Selector> = LazyLock::new(|| Selector::parse("[id]").unwrap());
static LINK: LazyLock<Selector> = LazyLock::new(|| Selector::parse("a[href]").unwrap());

const SKIPPED_TAGS: &[&str] = &["nav", "header", "footer", "aside", "script", "style", "noscript", "table", "figure", "form"];
const SKIPPED_CLASSES: &[&str] = &["references", "reflist", "mw-references-wrap", "navbox", "mw-editsection", "toc"];

fn is_skipped(el: &ElementRef<'_>) -> bool {
    let v = el.value();
    SKIPPED_TAGS.contains(&v.name()) || v.classes().any(|c| SKIPPED_CLASSES.contains(&c))
}

fn is_external(href: &str) -> bool {
    href.starts_with("http://") || href.starts_with("https://") || href.starts_with("file:")
}

pub(crate) fn parse(body: &str) -> (Vec<RawParagraph>, Vec<RawSection>, usize) {
    let doc = Html::parse_document(body);
    let targets = reference_targets(&doc);
    let mut lead = Vec::new();
    let mut sections: Vec<RawSection> = Vec::new();
    let mut dropped = 0;
    for el in doc.select(&FLOW) {
        if el.ancestors().filter_map(ElementRef::wrap).any(|a| is_skipped(&a) || a.value().name() == "p") {
            continue;
        }
        let name = el.value().name();
        if let Some(level) = name.strip_prefix('h').and_then(|d| d.parse::<u32>().ok()) {
            let mut pieces = Vec::new();
            collect(el, &targets, &mut pieces, &mut 0);
            let text = finish_paragraph(pieces.into_iter().filter(|p| matches!(p, Piece::Text(_))).collect()).text;
            if !text.is_empty() {
                sections.push(RawSection { level, text, paragraphs: Vec::new() });
            }
            continue;
        }
        let mut pieces = Vec::new();
        collect(el, &targets, &mut pieces, &mut dropped);
        let p = finish_paragraph(pieces);
        if p.text.is_empty() {
            continue;
        }
        match sections.last_mut() {
            Some(s) => s.paragraphs.push(p),
            None => lead.push(p),
        }
    }
    (lead, sections, dropped)
}

/// Maps element ids to the first external link inside them, so `#cite_note-…`
/// fragments resolve to URLs.
fn reference_targets(doc: &Html) -> HashMap<String, (String, Option<String>)> {
    let mut out = HashMap::new();
    for el in doc.select(&WITH_ID) {
        let Some(link) = el.select(&LINK).find(|a| a.value().attr("href").is_some_and(is_external)) else {
            continue;
        };
        let url = link.value().attr("href").unwrap_or_default().to_string();
        let title = Some(collapse_whitespace(&link.text().collect::<String>())).filter(|t| !t.is_empty() && *t != url);
        out.insert(el.value().attr("id").unwrap_or_default().to_string(), (url, title));
    }
    out
}

fn collect(
    node: ElementRef<'_>,
    targets: &HashMap<String, (String, Option<String>)>,
    out: &mut Vec<Piece>,
    dropped: &mut usize,
) {
    for child in node.children() {
        match child.value() {
            Node::Text(t) => out.push(Piece::Text(t.to_string())),
            Node::Element(e) => {
                let Some(el) = ElementRef::wrap(child) else { continue };
                if is_skipped(&el) {
                    continue;
                }
                if e.name() == "sup" {
                    let fragments: Vec<&str> = el
                        .select(&LINK)
                        .filter_map(|a| a.value().attr("href"))
                        .filter_map(|h| h.strip_prefix('#'))
                        .collect();
                    if !fragments.is_empty() {
                        for f in fragments {
                            match targets.get(f) {
                                Some((url, title)) => out.push(Piece::Marker(url.clone(), title.clone())),
                                None => *dropped += 1,
                            }
                        }
                        continue;
                    }
                }
                if e.name() == "br" {
                    out.push(Piece::Text(" ".into()));
                }
                collect(el, targets, out, dropped);
            }
            _ => {}
        }
    }
}
