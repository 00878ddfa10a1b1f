//! Dataset cleaning: article richness, abstract relevance, paragraph coverage
//! and answer length, applied in that order with an audit report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Abstract, AbstractSetRecord, Dataset, RecordKind};
use crate::hdacr::{detect, HallucinationReport, HdacrConfig, HdacrError, Verdict};
use crate::miner::ParsedArticle;
use crate::providers::Providers;
use crate::text::word_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanerConfig {
    pub min_article_words: usize,
    pub min_references: usize,
    pub min_abstract_relevance: f64,
    pub hdacr: HdacrConfig,
    pub min_answer_words: usize,
}

impl Default for CleanerConfig {
    fn default() -> Self {
        Self {
            min_article_words: 1000,
            min_references: 5,
            min_abstract_relevance: 0.35,
            hdacr: HdacrConfig::default(),
            min_answer_words: crate::corpus::DEFAULT_MIN_ANSWER_WORDS,
        }
    }
}

impl CleanerConfig {
    pub fn validate(&self) -> Result<(), CleanerError> {
        if !(0.0..=1.0).contains(&self.min_abstract_relevance) {
            return Err(CleanerError::Config(format!(
                "min_abstract_relevance {} outside [0, 1]",
                self.min_abstract_relevance
            )));
        }
        self.hdacr.validate().map_err(|e| CleanerError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DropReason {
    #[serde(rename = "R_RICHNESS_WORDS")]
    RichnessWords,
    #[serde(rename = "R_RICHNESS_REFS")]
    RichnessRefs,
    #[serde(rename = "R_RELEVANCE")]
    Relevance,
    #[serde(rename = "R_COVERAGE")]
    Coverage,
    #[serde(rename = "R_SHORT_ANSWER")]
    ShortAnswer,
}

impl DropReason {
    pub fn code(self) -> &'static str {
        match self {
            Self::RichnessWords => "R_RICHNESS_WORDS",
            Self::RichnessRefs => "R_RICHNESS_REFS",
            Self::Relevance => "R_RELEVANCE",
            Self::Coverage => "R_COVERAGE",
            Self::ShortAnswer => "R_SHORT_ANSWER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Richness,
    Relevance,
    Coverage,
    AnswerLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Drop(DropReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub stage: Stage,
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub id: String,
    pub kind: RecordKind,
    pub stage: Stage,
    pub reason: DropReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub stages: Vec<StageCounts>,
    pub drops: Vec<DropEntry>,
    /// Abstracts removed from records that were otherwise kept.
    pub abstracts_removed: usize,
    /// Coverage reports keyed by abstract-set id.
    pub hdacr_reports: BTreeMap<String, HallucinationReport>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CleaningReport {
    pub fn reason_counts(&self) -> BTreeMap<DropReason, usize> {
        let mut out = BTreeMap::new();
        for d in &self.drops {
            *out.entry(d.reason).or_default() += 1;
        }
        out
    }

    pub fn total_dropped(&self) -> usize {
        self.drops.len()
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageCounts> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CleanerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("coverage check of `{id}` failed: {source}")]
    Hdacr {
        id: String,
        #[source]
        source: Box<HdacrError>,
    },
    #[error("cancelled")]
    Cancelled,
}

/// A failed run, carrying the report for the stages that finished.
#[derive(Debug, thiserror::Error)]
#[error("cleaning aborted: {error}")]
pub struct CleanAbort {
    pub report: Box<CleaningReport>,
    #[source]
    pub error: CleanerError,
}

pub fn richness_filter(article: &ParsedArticle, cfg: &CleanerConfig) -> Decision {
    if article.word_count() < cfg.min_article_words {
        Decision::Drop(DropReason::RichnessWords)
    } else if article.distinct_citation_urls() < cfg.min_references {
        Decision::Drop(DropReason::RichnessRefs)
    } else {
        Decision::Keep
    }
}

/// Drops abstracts below `min_relevance`, then keeps only the most relevant
/// copy of each exact text. Survivors stay in input order; equal scores keep
/// the earlier copy. Abstracts without a score are never dropped for it.
pub fn filter_abstracts(abstracts: &[Abstract], min_relevance: f64) -> Vec<Abstract> {
    let passing: Vec<&Abstract> = abstracts.iter().filter(|a| a.relevance.is_none_or(|r| r >= min_relevance)).collect();
    let rank = |a: &Abstract| a.relevance.unwrap_or(f64::NEG_INFINITY);
    let mut best: HashMap<&str, usize> = HashMap::new();
    for (i, a) in passing.iter().enumerate() {
        best.entry(a.text.as_str())
            .and_modify(|j| {
                if rank(a) > rank(passing[*j]) {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    passing.iter().enumerate().filter(|(i, a)| best[a.text.as_str()] == *i).map(|(_, a)| (*a).clone()).collect()
}

pub fn relevance_filter(record: &AbstractSetRecord, cfg: &CleanerConfig) -> AbstractSetRecord {
    AbstractSetRecord { abstracts: filter_abstracts(&record.abstracts, cfg.min_abstract_relevance), ..record.clone() }
}

/// Checks that the abstracts cover every entity of the paragraph.
pub fn coverage_filter(
    paragraph: &str,
    abstracts: &[Abstract],
    cfg: &CleanerConfig,
    providers: &Providers,
) -> Result<(Decision, HallucinationReport), HdacrError> {
    if abstracts.is_empty() {
        return Err(HdacrError::EmptyInput(crate::hdacr::SourceRole::Reference));
    }
    let reference = abstracts.iter().map(|a| a.text.as_str()).collect::<Vec<_>>().join("\n\n");
    let report = detect(paragraph, &reference, &cfg.hdacr, providers)?;
    let decision = match report.verdict {
        Verdict::NoHallucination => Decision::Keep,
        Verdict::HallucinationPresent => Decision::Drop(DropReason::Coverage),
    };
    Ok((decision, report))
}

/// The part of a record id shared by the abstract set and the QA pair built
/// from the same paragraph.
pub fn link_key(id: &str) -> &str {
    id.split_once('-').map_or(id, |(_, rest)| rest)
}

struct Run<'a> {
    report: CleaningReport,
    cancel: Option<&'a AtomicBool>,
}

impl Run<'_> {
    fn check_cancel(&self) -> Result<(), CleanerError> {
        match self.cancel {
            Some(flag) if flag.load(Ordering::Relaxed) => Err(CleanerError::Cancelled),
            _ => Ok(()),
        }
    }

    fn drop(&mut self, id: &str, kind: RecordKind, stage: Stage, reason: DropReason, detail: impl Into<String>) {
        self.report.drops.push(DropEntry { id: id.to_string(), kind, stage, reason, detail: detail.into() });
    }

    fn close_stage(&mut self, stage: Stage, input: usize, data: &Dataset) {
        let kept = data.len();
        self.report.stages.push(StageCounts { stage, input, kept, dropped: input - kept });
    }
}

/// Runs every stage over `data`. `articles` backs the richness check; without
/// it every record passes richness.
pub fn clean(
    data: Dataset,
    articles: Option<&[ParsedArticle]>,
    cfg: &CleanerConfig,
    providers: &Providers,
    cancel: Option<&AtomicBool>,
) -> Result<(Dataset, CleaningReport), CleanAbort> {
    let mut run = Run { report: CleaningReport::default(), cancel };
    match stages(data, articles, cfg, providers, &mut run) {
        Ok(out) => {
            run.report.complete = true;
            Ok((out, run.report))
        }
        Err(error) => {
            run.report.error = Some(error.to_string());
            Err(CleanAbort { report: Box::new(run.report), error })
        }
    }
}

fn stages(
    mut data: Dataset,
    articles: Option<&[ParsedArticle]>,
    cfg: &CleanerConfig,
    providers: &Providers,
    run: &mut Run<'_>,
) -> Result<Dataset, CleanerError> {
    cfg.validate()?;

    run.check_cancel()?;
    let input = data.len();
    if let Some(articles) = articles {
        let verdicts: HashMap<&str, Decision> =
            articles.iter().map(|a| (a.topic.as_str(), richness_filter(a, cfg))).collect();
        let by_topic = |topic: &str| verdicts.get(topic).copied().unwrap_or(Decision::Keep);
        let mut pending = Vec::new();
        data.outlines.retain(|r| match by_topic(&r.topic) {
            Decision::Keep => true,
            Decision::Drop(reason) => {
                pending.push((r.id.clone(), RecordKind::Outline, reason, r.topic.clone()));
                false
            }
        });
        data.abstract_sets.retain(|r| match by_topic(&r.topic) {
            Decision::Keep => true,
            Decision::Drop(reason) => {
                pending.push((r.id.clone(), RecordKind::AbstractSet, reason, r.topic.clone()));
                false
            }
        });
        data.qa.retain(|r| match by_topic(&r.topic) {
            Decision::Keep => true,
            Decision::Drop(reason) => {
                pending.push((r.id.clone(), RecordKind::Qa, reason, r.topic.clone()));
                false
            }
        });
        for (id, kind, reason, topic) in pending {
            run.drop(&id, kind, Stage::Richness, reason, format!("article `{topic}`"));
        }
    }
    run.close_stage(Stage::Richness, input, &data);

    run.check_cancel()?;
    let input = data.len();
    let min = cfg.min_abstract_relevance;
    let mut removed = 0;
    let mut sets = Vec::with_capacity(data.abstract_sets.len());
    for r in std::mem::take(&mut data.abstract_sets) {
        let filtered = relevance_filter(&r, cfg);
        if filtered.abstracts.is_empty() {
            run.drop(&r.id, RecordKind::AbstractSet, Stage::Relevance, DropReason::Relevance, "no relevant abstracts");
        } else {
            removed += r.abstracts.len() - filtered.abstracts.len();
            sets.push(filtered);
        }
    }
    data.abstract_sets = sets;
    let mut qa = Vec::with_capacity(data.qa.len());
    for mut r in std::mem::take(&mut data.qa) {
        let before = r.abstracts.len();
        r.abstracts = filter_abstracts(&r.abstracts, min);
        if r.abstracts.is_empty() {
            run.drop(&r.id, RecordKind::Qa, Stage::Relevance, DropReason::Relevance, "no relevant abstracts");
        } else {
            removed += before - r.abstracts.len();
            qa.push(r);
        }
    }
    data.qa = qa;
    run.report.abstracts_removed = removed;
    run.close_stage(Stage::Relevance, input, &data);

    run.check_cancel()?;
    let input = data.len();
    let results: Vec<Result<(Decision, HallucinationReport), CleanerError>> = data
        .abstract_sets
        .par_iter()
        .map(|r| {
            run.check_cancel()?;
            coverage_filter(&r.paragraph, &r.abstracts, cfg, providers)
                .map_err(|source| CleanerError::Hdacr { id: r.id.clone(), source: Box::new(source) })
        })
        .collect();
    let mut uncovered = HashSet::new();
    let mut sets = Vec::with_capacity(data.abstract_sets.len());
    for (r, result) in std::mem::take(&mut data.abstract_sets).into_iter().zip(results) {
        let (decision, report) = result?;
        run.report.hdacr_reports.insert(r.id.clone(), report.clone());
        if decision == Decision::Keep {
            sets.push(r);
        } else {
            let missing: Vec<&str> = report.unverifiable.iter().map(|s| s.entity.surface.as_str()).collect();
            run.drop(&r.id, RecordKind::AbstractSet, Stage::Coverage, DropReason::Coverage, format!("unverifiable: {}", missing.join(", ")));
            uncovered.insert(link_key(&r.id).to_string());
        }
    }
    data.abstract_sets = sets;
    let mut qa = Vec::with_capacity(data.qa.len());
    for r in std::mem::take(&mut data.qa) {
        if uncovered.contains(link_key(&r.id)) {
            run.drop(&r.id, RecordKind::Qa, Stage::Coverage, DropReason::Coverage, "source paragraph not covered");
        } else {
            qa.push(r);
        }
    }
    data.qa = qa;
    run.close_stage(Stage::Coverage, input, &data);

    run.check_cancel()?;
    let input = data.len();
    let mut qa = Vec::with_capacity(data.qa.len());
    for r in std::mem::take(&mut data.qa) {
        let words = word_count(&r.answer);
        if words < cfg.min_answer_words {
            run.drop(&r.id, RecordKind::Qa, Stage::AnswerLength, DropReason::ShortAnswer, format!("{words} words"));
        } else {
            qa.push(r);
        }
    }
    data.qa = qa;
    run.close_stage(Stage::AnswerLength, input, &data);
    Ok(data)
}
