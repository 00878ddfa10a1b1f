use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use super::{ProviderError, SearchHit, SearchProvider};
use crate::bm25::{Bm25Index, Bm25Params};
use crate::retriever::{extract_main_text, html_title, path_to_file_url};
use crate::text::tokens;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePage {
    pub url: String,
    pub title: String,
    pub text: String,
}

/// Offline search over a fixed page set, ranked by BM25 over title and text.
/// Pages with zero score are not returned.
#[derive(Debug, Clone)]
pub struct FixtureSearch {
    pages: Vec<FixturePage>,
    index: Bm25Index,
}

impl FixtureSearch {
    pub fn new(pages: Vec<FixturePage>) -> Self {
        let docs: Vec<Vec<String>> = pages.iter().map(|p| tokens(&format!("{} {}", p.title, p.text))).collect();
        let index = Bm25Index::new(docs, Bm25Params::default());
        Self { pages, index }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    /// Indexes every `.html`, `.htm` and `.txt` file in `dir` (sorted by name),
    /// addressing each by its absolute `file://` URL.
    pub fn from_dir(dir: &Path) -> Result<Self, ProviderError> {
        let read_err = |e: std::io::Error| ProviderError::Config(format!("fixture dir {}: {e}", dir.display()));
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(read_err)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                matches!(p.extension().and_then(|e| e.to_str()), Some("html" | "htm" | "txt"))
            })
            .collect();
        paths.sort();
        let mut pages = Vec::new();
        for path in paths {
            let body = std::fs::read(&path).map_err(read_err)?;
            let is_html = path.extension().is_some_and(|e| e != "txt");
            let content_type = if is_html { "text/html" } else { "text/plain" };
            let text = extract_main_text(&body, content_type).map_err(|e| ProviderError::Other(e.to_string()))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let title = if is_html {
                html_title(&String::from_utf8_lossy(&body)).unwrap_or(stem)
            } else {
                stem
            };
            let url = path_to_file_url(&path).map_err(|e| ProviderError::Other(e.to_string()))?;
            pages.push(FixturePage { url, title, text });
        }
        Ok(Self::new(pages))
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }
}

impl SearchProvider for FixtureSearch {
    fn id(&self) -> &str {
        "fallback-fixture-search"
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderError> {
        if k == 0 {
            return Err(ProviderError::Precondition("k must be at least 1".into()));
        }
        let q = tokens(query);
        Ok(self
            .index
            .rank(&q)
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .take(k)
            .map(|(i, _)| {
                let p = &self.pages[i];
                SearchHit { url: p.url.clone(), title: p.title.clone(), snippet: p.text.chars().take(160).collect() }
            })
            .collect())
    }
}

/// Google SERPER web search (`POST {endpoint}` with an `X-API-KEY` header).
pub struct SerperSearch {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct SerperResponse {
    #[serde(default)]
    organic: Vec<SerperItem>,
}

#[derive(Deserialize)]
struct SerperItem {
    link: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    snippet: String,
}

impl SerperSearch {
    pub fn new(endpoint: &str, api_key: &str, timeout_ms: u64) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self { endpoint: endpoint.to_string(), api_key: api_key.to_string(), client })
    }
}

impl SearchProvider for SerperSearch {
    fn id(&self) -> &str {
        "serper"
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderError> {
        if k == 0 {
            return Err(ProviderError::Precondition("k must be at least 1".into()));
        }
        let resp = self
            .client
            .post(&self.endpoint)
            .header("X-API-KEY", &self.api_key)
            .json(&serde_json::json!({ "q": query, "num": k }))
            .send()
            .map_err(|e| ProviderError::Unavailable {
                endpoint: self.endpoint.clone(),
                attempts: 1,
                message: e.to_string(),
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Http {
                endpoint: self.endpoint.clone(),
                status: status.as_u16(),
                code: "search_failed".into(),
                message: resp.text().unwrap_or_default(),
            });
        }
        let body: SerperResponse = resp.json().map_err(|e| ProviderError::Contract(e.to_string()))?;
        Ok(body
            .organic
            .into_iter()
            .take(k)
            .map(|i| SearchHit { url: i.link, title: i.title, snippet: i.snippet })
            .collect())
    }
}
