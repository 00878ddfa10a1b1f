//! Deliberately plain reimplementations used as oracles. They share only the
//! tokenizer, segmenter and fallback providers with the library; every score
//! is recomputed here from the textbook formulas with explicit loops.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use lfag_core::providers::{CapitalizedNer, HashEmbedder, NerModel};
use lfag_core::retriever::segment_sentences;
use lfag_core::text::{normalize_surface, tokenize, Lang};

pub const K1: f64 = 1.5;
pub const B: f64 = 0.75;

pub fn bm25(query: &[String], docs: &[Vec<String>], d: usize) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|x| x.len()).sum::<usize>() as f64 / n;
    let dl = docs[d].len() as f64;
    let mut score = 0.0;
    for t in query {
        let tf = docs[d].iter().filter(|w| *w == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        score += idf * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * dl / avgdl));
    }
    score
}

pub fn bm25_normalized(query: &[String], docs: &[Vec<String>], d: usize) -> f64 {
    let n = docs.len() as f64;
    let mut bound = 0.0;
    for t in query {
        let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
        bound += ((n - df + 0.5) / (df + 0.5) + 1.0).ln() * (K1 + 1.0);
    }
    if bound <= 0.0 {
        return 0.0;
    }
    (bm25(query, docs, d) / bound).clamp(0.0, 1.0)
}

/// Indices of the `k` best documents: score descending, then index ascending.
pub fn top_k(query: &[String], docs: &[Vec<String>], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..docs.len()).map(|d| (d, bm25(query, docs, d))).collect();
    for i in 0..all.len() {
        for j in 0..all.len() - 1 - i {
            let (a, b) = (all[j], all[j + 1]);
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                all.swap(j, j + 1);
            }
        }
    }
    all.truncate(k);
    all
}

fn dot_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn entities(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for span in CapitalizedNer.extract(text).unwrap() {
        let s = normalize_surface(&span.surface);
        if !s.is_empty() && !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// `(hallucination_present, [(surface, gamma)])` for generated text `g`
/// against reference `r`, threshold `t`, with the fallback NER and embedder.
pub fn detect(g: &str, r: &str, t: f64) -> (bool, Vec<(String, f64)>) {
    let embedder = HashEmbedder::default();
    let gen = entities(g);
    let refs = entities(r);
    let docs: Vec<Vec<String>> = segment_sentences(r, Lang::En).iter().map(|s| tokenize(&s.text, Lang::En)).collect();
    let ref_vecs: Vec<Vec<f64>> = refs.iter().map(|e| embedder.embed_one(e).unwrap().values).collect();
    let mut scores = Vec::new();
    for e in &gen {
        let gamma = if refs.contains(e) {
            1.0
        } else {
            let v = embedder.embed_one(e).unwrap().values;
            let mut sbert: f64 = 0.0;
            for rv in &ref_vecs {
                sbert = sbert.max(dot_cos(&v, rv).clamp(0.0, 1.0));
            }
            let q = tokenize(e, Lang::En);
            let mut best: f64 = 0.0;
            for d in 0..docs.len() {
                best = best.max(bm25_normalized(&q, &docs, d));
            }
            (sbert + best) / 2.0
        };
        scores.push((e.clone(), gamma));
    }
    (scores.iter().any(|(_, g)| *g < t), scores)
}

const NAMES: &[&str] = &[
    "Alder", "Brixton", "Calloway", "Dunmore", "Everett", "Fenwick", "Galloway", "Hartley", "Irvine", "Jasper",
    "Kestrel", "Lowell", "Marlow", "Norwood", "Oakley", "Prescott", "Quentin", "Radley", "Sterling", "Thornton",
];
const FILLER: &[&str] = &[
    "met", "near", "and", "visited", "with", "beside", "after", "joined", "left", "across", "under", "toward",
];

fn phrase(rng: &mut StdRng) -> String {
    let n = rng.gen_range(1..=2);
    (0..n).map(|_| *NAMES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn sentence(rng: &mut StdRng, mentions: &[String]) -> String {
    let mut words = vec!["then".to_string()];
    for m in mentions {
        words.push(FILLER.choose(rng).unwrap().to_string());
        words.push(m.clone());
    }
    if rng.gen_bool(0.3) {
        words.push(format!("in {}", rng.gen_range(1900..2030)));
    }
    format!("{}.", words.join(" "))
}

/// A random `(G, R)` pair: R has 1 to 20 sentences; G mentions at most 10
/// entities, some copied from R and some invented.
pub fn random_instance(rng: &mut StdRng) -> (String, String) {
    let sentences = rng.gen_range(1..=20);
    let mut pool: Vec<String> = Vec::new();
    let mut r = Vec::new();
    for _ in 0..sentences {
        let mentions: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| phrase(rng)).collect();
        pool.extend(mentions.iter().cloned());
        r.push(sentence(rng, &mentions));
    }
    let mut g_mentions = Vec::new();
    for _ in 0..rng.gen_range(1..=5) {
        if rng.gen_bool(0.6) {
            g_mentions.push(pool.choose(rng).unwrap().clone());
        } else {
            g_mentions.push(phrase(rng));
        }
    }
    // Split into sentences of at most two mentions so runs of names do not
    // merge into one longer entity.
    let g = g_mentions.chunks(2).map(|c| sentence(rng, c)).collect::<Vec<_>>().join(" ");
    (g, r.join(" "))
}
