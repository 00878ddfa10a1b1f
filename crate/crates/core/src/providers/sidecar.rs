//! HTTP client for the model sidecar.
//!
//! Wire protocol (JSON over HTTP):
//!
//! * `POST /embed {"texts":[...]}` → `{"vectors":[[...]],"dim":N}`
//! * `POST /ner {"text":...,"model":...}` → `{"entities":[{"surface","start","end","label"}]}`
//! * `POST /generate {"prompt","max_tokens","temperature","seed"}` → `{"text":...}`
//! * `GET /health` → `{"status":"ok","models":[...]}`
//!
//! Failures are non-2xx responses carrying `{"error":code,"message":...}`.
//! Connection failures, timeouts and 5xx responses are retried with
//! exponential backoff; 4xx responses fail immediately. There is never a
//! silent fallback to local providers.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, Embedder, GenParams, Generator, NerModel, NerSpan, ProviderConfig, ProviderError};
use crate::text::char_slice;

/// Counting semaphore capping in-flight requests.
#[derive(Debug)]
struct Gate {
    max: usize,
    inflight: Mutex<usize>,
    cv: Condvar,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    fn new(max: usize) -> Self {
        Self { max, inflight: Mutex::new(0), cv: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.inflight.lock().expect("gate lock");
        while *n >= self.max {
            n = self.cv.wait(n).expect("gate lock");
        }
        *n += 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.inflight.lock().expect("gate lock") -= 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub status: String,
    #[serde(default)]
    pub models: Vec<String>,
}

#[derive(Deserialize)]
struct ErrorBody {
    #[serde(default)]
    error: String,
    #[serde(default)]
    message: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Deserialize)]
struct NerResponse {
    entities: Vec<NerSpan>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Debug)]
pub struct SidecarClient {
    base: String,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    retries: u32,
    backoff: Duration,
    gate: Gate,
}

impl SidecarClient {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let endpoint = cfg.endpoint.clone().unwrap_or_default();
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_string(),
            http,
            api_key: cfg.api_key.clone(),
            retries: cfg.retries.max(1),
            backoff: Duration::from_millis(cfg.backoff_ms),
            gate: Gate::new(cfg.max_concurrency.max(1)),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn call<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: Option<&B>) -> Result<R, ProviderError> {
        let url = format!("{}{}", self.base, path);
        let _permit = self.gate.acquire();
        let mut last_err = String::new();
        for attempt in 0..self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = match body {
                Some(b) => self.http.post(&url).json(b),
                None => self.http.get(&url),
            };
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_success() {
                return resp.json::<R>().map_err(|e| ProviderError::Contract(format!("{url}: {e}")));
            }
            let err: ErrorBody = resp.json().unwrap_or(ErrorBody { error: String::new(), message: String::new() });
            if status.is_client_error() {
                return Err(ProviderError::Http {
                    endpoint: url,
                    status: status.as_u16(),
                    code: err.error,
                    message: err.message,
                });
            }
            last_err = format!("HTTP {} {}: {}", status.as_u16(), err.error, err.message);
        }
        Err(ProviderError::Unavailable { endpoint: url, attempts: self.retries, message: last_err })
    }

    pub fn health(&self) -> Result<HealthStatus, ProviderError> {
        self.call::<(), _>("/health", None)
    }

    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(ProviderError::EmptyInput);
        }
        let resp: EmbedResponse = self.call("/embed", Some(&serde_json::json!({ "texts": texts })))?;
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError::Contract(format!(
                "/embed returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|values| {
                let v = EmbeddingVector { values };
                if v.dim() != resp.dim {
                    Err(ProviderError::Contract(format!("/embed vector of dim {} (declared {})", v.dim(), resp.dim)))
                } else if !v.is_unit() {
                    Err(ProviderError::Contract(format!("/embed vector norm {} is not 1", v.norm())))
                } else {
                    Ok(v)
                }
            })
            .collect()
    }

    pub fn ner(&self, text: &str, model: &str) -> Result<Vec<NerSpan>, ProviderError> {
        let resp: NerResponse = self.call("/ner", Some(&serde_json::json!({ "text": text, "model": model })))?;
        for e in &resp.entities {
            if char_slice(text, e.start, e.end) != Some(e.surface.as_str()) {
                return Err(ProviderError::Contract(format!(
                    "/ner span ({}, {}) does not slice to `{}`",
                    e.start, e.end, e.surface
                )));
            }
        }
        Ok(resp.entities)
    }

    pub fn generate(&self, prompt: &str, params: &GenParams) -> Result<String, ProviderError> {
        let body = serde_json::json!({
            "prompt": prompt,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "seed": params.seed,
        });
        let resp: GenerateResponse = self.call("/generate", Some(&body))?;
        Ok(resp.text)
    }
}

pub struct SidecarEmbedder {
    client: Arc<SidecarClient>,
}

impl SidecarEmbedder {
    pub fn new(client: Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl Embedder for SidecarEmbedder {
    fn id(&self) -> &str {
        "sidecar-embed"
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        self.client.embed(texts)
    }
}

pub struct SidecarNer {
    client: Arc<SidecarClient>,
    model: String,
}

impl SidecarNer {
    pub fn new(client: Arc<SidecarClient>, model: &str) -> Self {
        Self { client, model: model.to_string() }
    }
}

impl NerModel for SidecarNer {
    fn id(&self) -> &str {
        &self.model
    }

    fn extract(&self, text: &str) -> Result<Vec<NerSpan>, ProviderError> {
        self.client.ner(text, &self.model)
    }
}

pub struct SidecarGenerator {
    client: Arc<SidecarClient>,
}

impl SidecarGenerator {
    pub fn new(client: Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl Generator for SidecarGenerator {
    fn id(&self) -> &str {
        "sidecar-generate"
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<String, ProviderError> {
        if prompt.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        self.client.generate(prompt, params)
    }
}
