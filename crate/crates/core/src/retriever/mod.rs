//! Citation retrieval: fetch cited pages, extract their main text, segment
//! it into sentences and distill per-paragraph abstracts.

mod abstracts;
mod extract;
mod fetch;
mod segment;
mod stage;

pub use abstracts::{build_abstract, sentence_scores, DEFAULT_MIN_RELEVANCE, DEFAULT_SENTENCES_PER_ABSTRACT};
pub use extract::{extract_main_text, html_title, path_to_file_url};
pub use fetch::{FetchPolicy, FetchResult, FetchStatus, Fetcher, RobotsRules};
pub use segment::{join_sentences, segment_sentences, RuleSegmenter, Sentence, SentenceSegmenter};
pub use stage::{retrieve_abstract_sets, RetrieveConfig, RetrieveOutput};

use crate::providers::ProviderError;

#[derive(Debug, thiserror::Error)]
pub enum RetrieverError {
    #[error("E_ENCODING: {0}")]
    Encoding(String),
    #[error("unsupported content type `{0}`")]
    UnsupportedContentType(String),
    #[error("bad path: {0}")]
    BadPath(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("[{tag}] {source}")]
    Provider {
        tag: String,
        #[source]
        source: ProviderError,
    },
}

impl RetrieverError {
    pub fn rule_id(&self) -> &'static str {
        match self {
            Self::Encoding(_) => "E_ENCODING",
            Self::UnsupportedContentType(_) => "E_CONTENT_TYPE",
            Self::BadPath(_) => "E_PATH",
            Self::Precondition(_) => "E_PRECONDITION",
            Self::Provider { .. } => "E_PROVIDER",
        }
    }
}
