//! Text utilities shared by every stage: surface normalization, tokenization,
//! word counting, char-offset slicing and content hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

/// Article language. The corpus is bilingual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    En,
    Zh,
}

impl std::str::FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Lang::En),
            "zh" => Ok(Lang::Zh),
            other => Err(format!("unknown language `{other}`")),
        }
    }
}

/// Han ideographs plus kana; each counts as one word and one token.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F)
}

/// CJK symbols and fullwidth punctuation (。！？「」 and friends).
pub fn is_cjk_punct(c: char) -> bool {
    matches!(c as u32, 0x3000..=0x303F | 0xFF00..=0xFF0F | 0xFF1A..=0xFF20 | 0xFF3B..=0xFF40 | 0xFF5B..=0xFF65)
}

/// NFKC, lowercase, whitespace collapsed and trimmed.
pub fn normalize_surface(s: &str) -> String {
    let folded: String = s.nfkc().flat_map(char::to_lowercase).collect();
    collapse_whitespace(&folded)
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Word count for either language: every CJK ideograph is one word and every
/// whitespace-delimited run of other characters is one word, except runs made
/// only of CJK punctuation.
pub fn word_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_run = false;
    let mut run_has_content = false;
    for c in text.chars() {
        if c.is_whitespace() || is_cjk(c) {
            if in_run && run_has_content {
                count += 1;
            }
            in_run = false;
            run_has_content = false;
            if is_cjk(c) {
                count += 1;
            }
        } else {
            in_run = true;
            if !is_cjk_punct(c) {
                run_has_content = true;
            }
        }
    }
    if in_run && run_has_content {
        count += 1;
    }
    count
}

/// Metric tokenization: casefolded alphanumeric runs for `en`; for `zh` each
/// CJK codepoint is its own token and other alphanumeric runs stay whole.
pub fn tokenize(text: &str, lang: Lang) -> Vec<String> {
    let folded: String = text.nfkc().flat_map(char::to_lowercase).collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in folded.chars() {
        if lang == Lang::Zh && is_cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Language-agnostic tokenization used by BM25 scoring (the `zh` rule, which
/// degenerates to the `en` rule on text without CJK characters).
pub fn tokens(text: &str) -> Vec<String> {
    tokenize(text, Lang::Zh)
}

/// Slice `text` by char offsets `[start, end)`. Returns `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let b_start = indices.nth(start)?;
    let b_end = if end == start {
        b_start
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[b_start..b_end])
}

/// Byte offset → char offset.
pub fn char_offset(text: &str, byte_idx: usize) -> usize {
    text[..byte_idx].chars().count()
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// First eight digest bytes as an integer; stable across platforms and runs.
pub fn stable_hash64(data: &[u8]) -> u64 {
    let digest = Sha256::digest(data);
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(buf)
}

/// Content id over (topic, section path, paragraph). Re-running a stage on the
/// same input yields the same ids.
pub fn content_id(prefix: &str, topic: &str, section_path: &[String], paragraph: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(topic.as_bytes());
    hasher.update([0x1f]);
    for (i, part) in section_path.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1e]);
        }
        hasher.update(part.as_bytes());
    }
    hasher.update([0x1f]);
    hasher.update(paragraph.as_bytes());
    let digest = hex::encode(hasher.finalize());
    format!("{prefix}-{}", &digest[..24])
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_width_case_and_spaces() {
        assert_eq!(normalize_surface("  Fan\u{3000}\tHUI "), "fan hui");
        assert_eq!(normalize_surface("ＡｌｐｈａＧｏ"), "alphago");
    }

    #[test]
    fn counts_words_in_both_languages() {
        assert_eq!(word_count("the cat  sat\non the mat"), 6);
        assert_eq!(word_count("首尔大学是韩国的大学。"), 10);
        assert_eq!(word_count("QS世界大学排名"), 7);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("。 ！"), 0);
    }

    #[test]
    fn tokenizes_by_language() {
        assert_eq!(tokenize("The cat, sat!", Lang::En), vec!["the", "cat", "sat"]);
        assert_eq!(tokenize("QS世界", Lang::Zh), vec!["qs", "世", "界"]);
        assert_eq!(tokenize("QS世界", Lang::En), vec!["qs世界"]);
    }

    #[test]
    fn slices_by_chars() {
        let s = "首尔 Seoul";
        assert_eq!(char_slice(s, 0, 2), Some("首尔"));
        assert_eq!(char_slice(s, 3, 8), Some("Seoul"));
        assert_eq!(char_slice(s, 8, 8), Some(""));
        assert_eq!(char_slice(s, 3, 9), None);
        assert_eq!(char_offset(s, "首尔 ".len()), 3);
    }

    #[test]
    fn content_ids_are_stable_and_distinct() {
        let p = vec!["History".to_string()];
        let a = content_id("as", "AlphaGo", &p, "text");
        assert_eq!(a, content_id("as", "AlphaGo", &p, "text"));
        assert_ne!(a, content_id("as", "AlphaGo", &p, "text2"));
        assert!(a.starts_with("as-"));
    }
}
