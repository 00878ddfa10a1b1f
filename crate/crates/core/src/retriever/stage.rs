use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_abstract, extract_main_text, segment_sentences, FetchStatus, Fetcher, RetrieverError};
use crate::corpus::{AbstractSetRecord, Citation};
use crate::miner::{relative_path, ParsedArticle};
use crate::providers::Embedder;
use crate::text::content_id;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieveConfig {
    /// Sentences per abstract.
    pub k: usize,
    pub min_relevance: f64,
    pub workers: usize,
}

impl Default for RetrieveConfig {
    fn default() -> Self {
        Self { k: super::DEFAULT_SENTENCES_PER_ABSTRACT, min_relevance: super::DEFAULT_MIN_RELEVANCE, workers: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrieveOutput {
    pub records: Vec<AbstractSetRecord>,
    /// URLs that could not be fetched or read, with the reason.
    pub failures: BTreeMap<String, String>,
}

/// One abstract-set record per cited paragraph. Every cited URL is fetched
/// once; each paragraph gets at most one abstract per source, and sources
/// scoring below the relevance cutoff contribute none.
pub fn retrieve_abstract_sets(
    articles: &[ParsedArticle],
    fetcher: &Fetcher,
    embedder: &dyn Embedder,
    cfg: &RetrieveConfig,
) -> Result<RetrieveOutput, RetrieverError> {
    let mut seen = HashSet::new();
    let urls: Vec<String> = articles
        .iter()
        .flat_map(|a| a.citation_markers.iter().map(|m| m.url.clone()))
        .filter(|u| seen.insert(u.clone()))
        .collect();
    let mut failures = BTreeMap::new();
    let mut texts: BTreeMap<String, String> = BTreeMap::new();
    for result in fetcher.fetch_all(&urls, cfg.workers) {
        let reason = match (&result.status, &result.body) {
            (FetchStatus::Ok, Some(body)) => {
                match extract_main_text(body, result.content_type.as_deref().unwrap_or("text/plain")) {
                    Ok(text) => {
                        texts.insert(result.url.clone(), text);
                        continue;
                    }
                    Err(e) => e.to_string(),
                }
            }
            (status, _) => format!("{status:?}"),
        };
        log::warn!("skipping citation {}: {reason}", result.url);
        failures.insert(result.url, reason);
    }

    struct Job<'a> {
        article: &'a ParsedArticle,
        path: &'a [String],
        paragraph: &'a str,
        citations: Vec<Citation>,
    }
    let mut jobs = Vec::new();
    for article in articles {
        for section in &article.sections {
            for (i, paragraph) in section.paragraphs.iter().enumerate() {
                let mut urls = HashSet::new();
                let citations: Vec<Citation> = article
                    .citation_markers
                    .iter()
                    .filter(|m| m.heading_path == section.path && m.paragraph_index == i)
                    .filter(|m| urls.insert(m.url.clone()))
                    .map(|m| Citation { url: m.url.clone(), title: m.title.clone() })
                    .collect();
                if !citations.is_empty() {
                    jobs.push(Job { article, path: &section.path, paragraph, citations });
                }
            }
        }
    }

    let records = jobs
        .par_iter()
        .map(|job| {
            let mut abstracts = Vec::new();
            for c in &job.citations {
                let Some(text) = texts.get(&c.url) else { continue };
                let sentences = segment_sentences(text, job.article.lang);
                if let Some(a) = build_abstract(job.paragraph, &sentences, embedder, cfg.k, cfg.min_relevance, &c.url)? {
                    abstracts.push(a);
                }
            }
            let section_path = relative_path(job.path);
            Ok(AbstractSetRecord {
                id: content_id("as", &job.article.topic, &section_path, job.paragraph),
                article_id: job.article.article_id(),
                topic: job.article.topic.clone(),
                section_path,
                paragraph: job.paragraph.to_string(),
                citations: job.citations.clone(),
                abstracts,
            })
        })
        .collect::<Result<Vec<_>, RetrieverError>>()?;
    Ok(RetrieveOutput { records, failures })
}
