use serde::{Deserialize, Serialize};

use crate::text::Lang;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
    /// Char offsets `[start, end)` into the segmented text.
    pub char_span: (usize, usize),
}

/// Pluggable segmentation, so a model-based splitter can stand in for the
/// rule-based one.
pub trait SentenceSegmenter: Send + Sync {
    fn segment(&self, text: &str, lang: Lang) -> Vec<Sentence>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleSegmenter;

impl SentenceSegmenter for RuleSegmenter {
    fn segment(&self, text: &str, lang: Lang) -> Vec<Sentence> {
        segment_sentences(text, lang)
    }
}

/// Lowercased tokens that end with a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "cf", "al", "inc", "ltd",
    "co", "corp", "no", "fig", "vol", "pp", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
    "nov", "dec", "u.s", "u.k", "gen", "gov", "sen", "rep", "approx", "dept", "est",
];

fn is_cjk_terminator(c: char) -> bool {
    matches!(c, '。' | '！' | '？' | '；')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’' | '」' | '』' | '）' | '》')
}

/// Rule-based splitting.
///
/// CJK terminators (。！？；) always end a sentence. ASCII `.`, `!` and `?` end
/// one when followed by whitespace or end of text; for English a period after
/// a known abbreviation does not. Closing quotes and brackets directly after a
/// terminator stay with the sentence. Spans never include surrounding
/// whitespace, so together they cover every non-whitespace char exactly once.
pub fn segment_sentences(text: &str, lang: Lang) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(i);
        }
        let ends = if is_cjk_terminator(c) {
            true
        } else if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && (is_closer(chars[j]) || matches!(chars[j], '.' | '!' | '?')) {
                j += 1;
            }
            let boundary = j == chars.len() || chars[j].is_whitespace();
            boundary && !(c == '.' && lang == Lang::En && is_abbreviation(&chars, start.unwrap_or(0), i))
        } else {
            false
        };
        if ends {
            let mut end = i + 1;
            while end < chars.len() && (is_closer(chars[end]) || matches!(chars[end], '.' | '!' | '?')) {
                end += 1;
            }
            push(&mut out, &chars, start.take().unwrap_or(i), end);
            i = end;
        } else {
            i += 1;
        }
    }
    if let Some(s) = start {
        let mut end = chars.len();
        while end > s && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        push(&mut out, &chars, s, end);
    }
    out
}

fn push(out: &mut Vec<Sentence>, chars: &[char], start: usize, end: usize) {
    let text: String = chars[start..end].iter().collect();
    let index = out.len();
    out.push(Sentence { text, index, char_span: (start, end) });
}

fn is_abbreviation(chars: &[char], sentence_start: usize, dot: usize) -> bool {
    let mut s = dot;
    while s > sentence_start && !chars[s - 1].is_whitespace() && !matches!(chars[s - 1], '(' | '"' | '“') {
        s -= 1;
    }
    let word: String = chars[s..dot].iter().collect::<String>().to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Joins sentence texts the way abstracts store them: a single space between
/// sentences, none after a CJK terminator.
pub fn join_sentences<S: AsRef<str>>(parts: &[S]) -> String {
    let mut out = String::new();
    for p in parts {
        let p = p.as_ref();
        if !out.is_empty() && !out.ends_with(is_cjk_terminator) && !out.ends_with(|c: char| is_closer(c) && c as u32 > 0x7f) {
            out.push(' ');
        }
        out.push_str(p);
    }
    out
}
