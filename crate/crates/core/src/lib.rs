//! Toolkit for building, cleaning and evaluating long-form article generation
//! corpora: wiki mining, citation retrieval, question-answer annotation,
//! entity-level hallucination detection, retrieval baselines and metrics.

pub mod annotator;
pub mod bm25;
pub mod cleaner;
pub mod corpus;
pub mod hdacr;
pub mod metrics;
pub mod miner;
pub mod pipelines;
pub mod providers;
pub mod retriever;
pub mod text;
