//! Okapi BM25 over pre-tokenized documents.
//!
//! IDF uses the +1-smoothed form `ln((N - df + 0.5) / (df + 0.5) + 1)`, which
//! is always positive. Scores can be normalized into `[0, 1]` by the per-query
//! saturation bound `Σ_t IDF(t)·(k1 + 1)`, the limit each term's contribution
//! approaches as its term frequency grows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Immutable BM25 statistics. Documents are referenced by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub params: Bm25Params,
    pub term_freqs: Vec<BTreeMap<String, u32>>,
    pub doc_lens: Vec<usize>,
    pub doc_freqs: BTreeMap<String, usize>,
    pub avgdl: f64,
}

impl Bm25Index {
    pub fn new<I, D>(docs: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[String]>,
    {
        let mut term_freqs = Vec::new();
        let mut doc_lens = Vec::new();
        let mut doc_freqs: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let doc = doc.as_ref();
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in doc {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freqs.entry(t.clone()).or_default() += 1;
            }
            doc_lens.push(doc.len());
            term_freqs.push(tf);
        }
        let avgdl = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().sum::<usize>() as f64 / doc_lens.len() as f64
        };
        Self { params, term_freqs, doc_lens, doc_freqs, avgdl }
    }

    pub fn len(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lens.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freqs.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    pub fn score(&self, query: &[String], doc: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let dl = self.doc_lens[doc] as f64;
        let len_norm = if self.avgdl > 0.0 { dl / self.avgdl } else { 1.0 };
        let tfs = &self.term_freqs[doc];
        query
            .iter()
            .map(|t| {
                let tf = tfs.get(t).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    0.0
                } else {
                    self.idf(t) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm))
                }
            })
            .sum()
    }

    /// Upper bound of `score(query, ·)` over all possible documents.
    pub fn saturation_bound(&self, query: &[String]) -> f64 {
        query.iter().map(|t| self.idf(t) * (self.params.k1 + 1.0)).sum()
    }

    /// `score / saturation_bound`, clamped to `[0, 1]`; 0 for an empty query.
    pub fn normalized_score(&self, query: &[String], doc: usize) -> f64 {
        let bound = self.saturation_bound(query);
        if bound <= 0.0 {
            return 0.0;
        }
        (self.score(query, doc) / bound).clamp(0.0, 1.0)
    }

    /// Best normalized score over all documents; 0 for an empty index.
    pub fn max_normalized(&self, query: &[String]) -> f64 {
        (0..self.len())
            .map(|d| self.normalized_score(query, d))
            .fold(0.0, f64::max)
    }

    /// All documents ranked by descending score; ties keep ascending position.
    pub fn rank(&self, query: &[String]) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.len()).map(|d| (d, self.score(query, d))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
    }
}
