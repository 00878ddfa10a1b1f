use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use lfag_core::annotator::TemplateBank;
use lfag_core::cleaner::CleanerConfig;
use lfag_core::hdacr::HdacrConfig;
use lfag_core::metrics::MetricsConfig;
use lfag_core::pipelines::PipelineConfig;
use lfag_core::providers::{ProviderConfig, SearchConfig};
use lfag_core::retriever::{FetchPolicy, RetrieveConfig};
use lfag_core::text::Lang;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateSection {
    /// JSON list of templates; the built-in bank when unset.
    pub templates: Option<PathBuf>,
}

impl AnnotateSection {
    pub fn bank(&self) -> Result<TemplateBank, CliError> {
        match &self.templates {
            Some(p) => TemplateBank::load(p).map_err(|e| CliError::Validation(e.rule_id().into(), e.to_string())),
            None => Ok(TemplateBank::default_bank()),
        }
    }
}

/// Everything one invocation needs. Every section is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: usize,
    pub log_level: String,
    pub lang: Lang,
    pub providers: ProviderConfig,
    pub search: SearchConfig,
    pub fetch: FetchPolicy,
    pub retrieve: RetrieveConfig,
    pub annotate: AnnotateSection,
    pub cleaner: CleanerConfig,
    pub hdacr: HdacrConfig,
    pub metrics: MetricsConfig,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            workers: 4,
            log_level: "info".into(),
            lang: Lang::En,
            providers: ProviderConfig::default(),
            search: SearchConfig::default(),
            fetch: FetchPolicy::default(),
            retrieve: RetrieveConfig::default(),
            annotate: AnnotateSection::default(),
            cleaner: CleanerConfig::default(),
            hdacr: HdacrConfig::default(),
            metrics: MetricsConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

static VAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

/// Replaces `${NAME}` with the environment value, JSON-escaped so it can sit
/// inside a string literal. Unset variables are an error.
pub fn interpolate(raw: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, CliError> {
    let mut missing = None;
    let out = VAR.replace_all(raw, |c: &regex::Captures<'_>| match lookup(&c[1]) {
        Some(v) => {
            let quoted = serde_json::to_string(&v).expect("strings serialize");
            quoted[1..quoted.len() - 1].to_string()
        }
        None => {
            missing.get_or_insert_with(|| c[1].to_string());
            String::new()
        }
    });
    match missing {
        Some(name) => Err(CliError::Validation("E_CONFIG".into(), format!("environment variable {name} is not set"))),
        None => Ok(out.into_owned()),
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let text = interpolate(&raw, |k| std::env::var(k).ok())?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation("E_CONFIG".into(), format!("{}: {e}", path.display())))
    }
}
