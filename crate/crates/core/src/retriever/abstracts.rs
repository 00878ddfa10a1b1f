use super::{RetrieverError, Sentence};
use crate::corpus::Abstract;
use crate::providers::Embedder;

pub const DEFAULT_SENTENCES_PER_ABSTRACT: usize = 3;
pub const DEFAULT_MIN_RELEVANCE: f64 = 0.35;

/// Relevance of each source sentence to the paragraph: `max(0, cosine)` of
/// their embeddings. Returned in the order of `sentences`.
pub fn sentence_scores(
    paragraph: &str,
    sentences: &[Sentence],
    embedder: &dyn Embedder,
) -> Result<Vec<f64>, RetrieverError> {
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let mut texts: Vec<&str> = Vec::with_capacity(sentences.len() + 1);
    texts.push(paragraph);
    texts.extend(sentences.iter().map(|s| s.text.as_str()));
    let vectors = embedder
        .embed(&texts)
        .map_err(|source| RetrieverError::Provider { tag: format!("embed:{}", embedder.id()), source })?;
    let (para, rest) = vectors.split_first().expect("one vector per input");
    Ok(rest.iter().map(|v| para.similarity(v).min(1.0)).collect())
}

/// Builds an abstract from the `k` source sentences most relevant to
/// `paragraph`, ties going to the lower sentence index.
///
/// Returns `None` when there are no sentences or the best score falls below
/// `min_relevance`. The abstract text is the selected sentences in source
/// order and its relevance is the mean of their scores.
pub fn build_abstract(
    paragraph: &str,
    sentences: &[Sentence],
    embedder: &dyn Embedder,
    k: usize,
    min_relevance: f64,
    source_url: &str,
) -> Result<Option<Abstract>, RetrieverError> {
    if k == 0 {
        return Err(RetrieverError::Precondition("k must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&min_relevance) {
        return Err(RetrieverError::Precondition(format!("min_relevance {min_relevance} outside [0, 1]")));
    }
    let scores = sentence_scores(paragraph, sentences, embedder)?;
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(sentences[a].index.cmp(&sentences[b].index)));
    let Some(&best) = order.first() else { return Ok(None) };
    if scores[best] < min_relevance {
        return Ok(None);
    }
    let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
    chosen.sort_by_key(|&i| sentences[i].index);
    let parts: Vec<&str> = chosen.iter().map(|&i| sentences[i].text.as_str()).collect();
    let relevance = chosen.iter().map(|&i| scores[i]).sum::<f64>() / chosen.len() as f64;
    Ok(Some(Abstract {
        text: super::join_sentences(&parts),
        source_url: source_url.to_string(),
        source_sentence_indices: chosen.iter().map(|&i| sentences[i].index).collect(),
        relevance: Some(relevance),
    }))
}
