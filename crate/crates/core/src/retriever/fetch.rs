//! Polite fetching: per-host rate limiting, robots.txt, a size cap, an
//! on-disk URL cache and `file://` support for offline fixtures.

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::text::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchPolicy {
    pub timeout_ms: u64,
    pub max_bytes: usize,
    /// Requests per second allowed against one host; `0` disables limiting.
    pub per_host_rate: f64,
    pub user_agent: String,
    pub respect_robots: bool,
    /// Content-addressed response cache; re-runs read from here first.
    pub cache_dir: Option<PathBuf>,
    /// Base directory for relative `file:` URLs.
    pub file_root: Option<PathBuf>,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self {
            timeout_ms: 10_000,
            max_bytes: 2 * 1024 * 1024,
            per_host_rate: 1.0,
            user_agent: concat!("lfag-fetcher/", env!("CARGO_PKG_VERSION")).to_string(),
            respect_robots: true,
            cache_dir: None,
            file_root: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    HttpError { code: u16 },
    Timeout,
    RobotsDenied,
    TooLarge,
    /// Transport failures that are neither timeouts nor HTTP statuses:
    /// refused connections, DNS errors, unreadable files, bad URLs.
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchResult {
    pub url: String,
    pub status: FetchStatus,
    pub content_type: Option<String>,
    /// Present iff `status` is `Ok`.
    pub body: Option<Vec<u8>>,
    pub fetched_at: String,
}

impl FetchResult {
    fn failed(url: &str, status: FetchStatus) -> Self {
        Self { url: url.to_string(), status, content_type: None, body: None, fetched_at: now() }
    }

    pub fn is_ok(&self) -> bool {
        self.status == FetchStatus::Ok
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    url: String,
    content_type: Option<String>,
    fetched_at: String,
}

/// Allow/disallow rules from one robots.txt group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    rules: Vec<(bool, String)>,
}

impl RobotsRules {
    /// Parses the group addressed to `user_agent` (by product-token
    /// containment), falling back to the `*` group.
    pub fn parse(body: &str, user_agent: &str) -> Self {
        let token = user_agent.split('/').next().unwrap_or_default().to_ascii_lowercase();
        let mut specific: Option<Vec<(bool, String)>> = None;
        let mut wildcard: Option<Vec<(bool, String)>> = None;
        let mut agents: Vec<String> = Vec::new();
        let mut rules: Vec<(bool, String)> = Vec::new();
        let mut in_rules = false;

        let mut flush = |agents: &mut Vec<String>, rules: &mut Vec<(bool, String)>| {
            for a in agents.iter() {
                if a == "*" {
                    wildcard.get_or_insert_with(Vec::new).extend(rules.iter().cloned());
                } else if !token.is_empty() && token.contains(a.as_str()) {
                    specific.get_or_insert_with(Vec::new).extend(rules.iter().cloned());
                }
            }
            agents.clear();
            rules.clear();
        };

        for line in body.lines() {
            let line = line.split('#').next().unwrap_or_default().trim();
            let Some((key, value)) = line.split_once(':') else { continue };
            let value = value.trim();
            match key.trim().to_ascii_lowercase().as_str() {
                "user-agent" => {
                    if in_rules {
                        flush(&mut agents, &mut rules);
                        in_rules = false;
                    }
                    agents.push(value.to_ascii_lowercase());
                }
                "allow" => {
                    in_rules = true;
                    if !value.is_empty() {
                        rules.push((true, value.to_string()));
                    }
                }
                "disallow" => {
                    in_rules = true;
                    if !value.is_empty() {
                        rules.push((false, value.to_string()));
                    }
                }
                _ => {}
            }
        }
        flush(&mut agents, &mut rules);
        Self { rules: specific.or(wildcard).unwrap_or_default() }
    }

    /// Longest matching prefix wins; `Allow` wins a tie.
    pub fn allows(&self, path: &str) -> bool {
        let mut best: Option<(usize, bool)> = None;
        for (allow, prefix) in &self.rules {
            if path.starts_with(prefix.as_str()) {
                let len = prefix.len();
                best = match best {
                    Some((l, a)) if l > len || (l == len && a) => Some((l, a)),
                    _ => Some((len, *allow)),
                };
            }
        }
        best.is_none_or(|(_, allow)| allow)
    }
}

/// A reusable fetcher. Shared by reference across worker threads; the rate
/// limiter and robots cache are per instance.
pub struct Fetcher {
    policy: FetchPolicy,
    client: reqwest::blocking::Client,
    next_slot: Mutex<HashMap<String, Instant>>,
    robots: Mutex<HashMap<String, RobotsRules>>,
}

impl std::fmt::Debug for Fetcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fetcher").field("policy", &self.policy).finish()
    }
}

impl Fetcher {
    pub fn new(policy: FetchPolicy) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .user_agent(policy.user_agent.clone())
            .build()
            .expect("http client with static configuration");
        Self { policy, client, next_slot: Mutex::new(HashMap::new()), robots: Mutex::new(HashMap::new()) }
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    /// Fetches one URL. Every failure is reported in the returned status.
    pub fn fetch_url(&self, url: &str) -> FetchResult {
        if let Some(hit) = self.cache_get(url) {
            return hit;
        }
        let result = if url.starts_with("file:") {
            self.fetch_file(url)
        } else {
            self.fetch_http(url)
        };
        if result.is_ok() {
            self.cache_put(&result);
        }
        result
    }

    /// Fetches with a bounded worker pool. Output order equals input order.
    pub fn fetch_all(&self, urls: &[String], workers: usize) -> Vec<FetchResult> {
        let workers = workers.clamp(1, urls.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<FetchResult>>> = urls.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= urls.len() {
                        break;
                    }
                    let r = self.fetch_url(&urls[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    }

    fn fetch_file(&self, url: &str) -> FetchResult {
        let Some(path) = self.file_path(url) else {
            return FetchResult::failed(url, FetchStatus::Failed { reason: "not a usable file URL".into() });
        };
        let bytes = match std::fs::metadata(&path) {
            Ok(m) if m.len() as usize > self.policy.max_bytes => return FetchResult::failed(url, FetchStatus::TooLarge),
            Ok(_) => std::fs::read(&path),
            Err(e) => Err(e),
        };
        match bytes {
            Ok(body) => FetchResult {
                url: url.to_string(),
                status: FetchStatus::Ok,
                content_type: Some(guess_content_type(&path).to_string()),
                body: Some(body),
                fetched_at: now(),
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                FetchResult::failed(url, FetchStatus::HttpError { code: 404 })
            }
            Err(e) => FetchResult::failed(url, FetchStatus::Failed { reason: e.to_string() }),
        }
    }

    fn file_path(&self, url: &str) -> Option<PathBuf> {
        if url.starts_with("file://") {
            return reqwest::Url::parse(url).ok()?.to_file_path().ok();
        }
        let rel = url.strip_prefix("file:")?;
        let root = self.policy.file_root.clone().unwrap_or_else(|| PathBuf::from("."));
        Some(root.join(rel))
    }

    fn fetch_http(&self, url: &str) -> FetchResult {
        let parsed = match reqwest::Url::parse(url) {
            Ok(u) if matches!(u.scheme(), "http" | "https") && u.host_str().is_some() => u,
            _ => return FetchResult::failed(url, FetchStatus::Failed { reason: "not an absolute http(s) URL".into() }),
        };
        let host = host_key(&parsed);
        if self.policy.respect_robots && !self.robots_allow(&parsed, &host) {
            return FetchResult::failed(url, FetchStatus::RobotsDenied);
        }
        self.wait_for_slot(&host);
        let started = Instant::now();
        let deadline = Duration::from_millis(self.policy.timeout_ms);
        let resp = match self.client.get(parsed).send() {
            Ok(r) => r,
            Err(e) => return FetchResult::failed(url, transport_status(&e)),
        };
        let status = resp.status();
        if !status.is_success() {
            return FetchResult::failed(url, FetchStatus::HttpError { code: status.as_u16() });
        }
        if resp.content_length().is_some_and(|n| n as usize > self.policy.max_bytes) {
            return FetchResult::failed(url, FetchStatus::TooLarge);
        }
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let mut body = Vec::new();
        let limit = self.policy.max_bytes as u64 + 1;
        if let Err(e) = resp.take(limit).read_to_end(&mut body) {
            let timed_out = e.kind() == std::io::ErrorKind::TimedOut || started.elapsed() >= deadline;
            let status = if timed_out { FetchStatus::Timeout } else { FetchStatus::Failed { reason: e.to_string() } };
            return FetchResult::failed(url, status);
        }
        if body.len() > self.policy.max_bytes {
            return FetchResult::failed(url, FetchStatus::TooLarge);
        }
        if started.elapsed() > deadline {
            return FetchResult::failed(url, FetchStatus::Timeout);
        }
        FetchResult { url: url.to_string(), status: FetchStatus::Ok, content_type, body: Some(body), fetched_at: now() }
    }

    /// Reserves the next free request slot for `host` and sleeps until it.
    fn wait_for_slot(&self, host: &str) {
        if self.policy.per_host_rate <= 0.0 {
            return;
        }
        let interval = Duration::from_secs_f64(1.0 / self.policy.per_host_rate);
        let slot = {
            let mut slots = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = slots.get(host).copied().filter(|s| *s > now).unwrap_or(now);
            slots.insert(host.to_string(), slot + interval);
            slot
        };
        let wait = slot.saturating_duration_since(Instant::now());
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn robots_allow(&self, url: &reqwest::Url, host: &str) -> bool {
        let cached = self.robots.lock().expect("robots lock").get(host).cloned();
        let rules = match cached {
            Some(r) => r,
            None => {
                let mut robots_url = url.clone();
                robots_url.set_path("/robots.txt");
                robots_url.set_query(None);
                robots_url.set_fragment(None);
                self.wait_for_slot(host);
                // A missing or unreadable robots.txt allows everything.
                let body = self
                    .client
                    .get(robots_url)
                    .send()
                    .ok()
                    .filter(|r| r.status().is_success())
                    .and_then(|r| r.text().ok())
                    .unwrap_or_default();
                let rules = RobotsRules::parse(&body, &self.policy.user_agent);
                self.robots.lock().expect("robots lock").insert(host.to_string(), rules.clone());
                rules
            }
        };
        rules.allows(url.path())
    }

    fn cache_paths(&self, url: &str) -> Option<(PathBuf, PathBuf)> {
        let dir = self.policy.cache_dir.as_ref()?;
        let key = sha256_hex(url.as_bytes());
        Some((dir.join(format!("{key}.json")), dir.join(format!("{key}.body"))))
    }

    fn cache_get(&self, url: &str) -> Option<FetchResult> {
        let (meta_path, body_path) = self.cache_paths(url)?;
        let meta: CacheMeta = serde_json::from_slice(&std::fs::read(meta_path).ok()?).ok()?;
        if meta.url != url {
            return None;
        }
        let body = std::fs::read(body_path).ok()?;
        Some(FetchResult {
            url: meta.url,
            status: FetchStatus::Ok,
            content_type: meta.content_type,
            body: Some(body),
            fetched_at: meta.fetched_at,
        })
    }

    fn cache_put(&self, result: &FetchResult) {
        let Some((meta_path, body_path)) = self.cache_paths(&result.url) else { return };
        let meta = CacheMeta {
            url: result.url.clone(),
            content_type: result.content_type.clone(),
            fetched_at: result.fetched_at.clone(),
        };
        let write = || -> std::io::Result<()> {
            if let Some(dir) = meta_path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&body_path, result.body.as_deref().unwrap_or_default())?;
            std::fs::write(&meta_path, serde_json::to_vec(&meta).map_err(std::io::Error::other)?)
        };
        if let Err(e) = write() {
            log::warn!("cannot cache {}: {e}", result.url);
        }
    }
}

fn host_key(url: &reqwest::Url) -> String {
    format!("{}://{}:{}", url.scheme(), url.host_str().unwrap_or_default(), url.port_or_known_default().unwrap_or(0))
}

fn transport_status(e: &reqwest::Error) -> FetchStatus {
    let mut source: Option<&dyn std::error::Error> = Some(e);
    while let Some(err) = source {
        if let Some(io) = err.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::TimedOut {
                return FetchStatus::Timeout;
            }
        }
        source = err.source();
    }
    if e.is_timeout() {
        FetchStatus::Timeout
    } else {
        FetchStatus::Failed { reason: e.to_string() }
    }
}

fn guess_content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("html" | "htm") => "text/html; charset=utf-8",
        _ => "text/plain; charset=utf-8",
    }
}
