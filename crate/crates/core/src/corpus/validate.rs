use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Decoder, Record, RecordKind};
use crate::text::word_count;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected {expected} records, found {found}")]
    KindMismatch { path: PathBuf, expected: RecordKind, found: RecordKind },
}

/// Per-kind input files. Absent kinds are counted as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetPaths {
    pub outline: Option<PathBuf>,
    pub abstract_set: Option<PathBuf>,
    pub qa: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside `dir`, keeping only those that exist.
    pub fn in_dir(dir: &Path) -> Self {
        let pick = |kind: RecordKind| Some(dir.join(kind.file_name())).filter(|p| p.is_file());
        Self {
            outline: pick(RecordKind::Outline),
            abstract_set: pick(RecordKind::AbstractSet),
            qa: pick(RecordKind::Qa),
        }
    }

    pub fn get(&self, kind: RecordKind) -> Option<&PathBuf> {
        match kind {
            RecordKind::Outline => self.outline.as_ref(),
            RecordKind::AbstractSet => self.abstract_set.as_ref(),
            RecordKind::Qa => self.qa.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub lines: usize,
    pub valid: usize,
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Record id, or `line:N` when the line has no readable id.
    pub id: String,
    pub line: usize,
    pub rule: String,
    pub message: String,
}

/// Raw sums kept so that shard reports merge associatively.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsTotals {
    pub outlines: usize,
    pub headings: usize,
    pub qa_records: usize,
    pub qa_abstracts: usize,
    pub answer_words_sum: usize,
    pub answer_words_min: Option<usize>,
    pub answer_words_max: Option<usize>,
}

impl StatsTotals {
    fn merge(&mut self, o: &StatsTotals) {
        self.outlines += o.outlines;
        self.headings += o.headings;
        self.qa_records += o.qa_records;
        self.qa_abstracts += o.qa_abstracts;
        self.answer_words_sum += o.answer_words_sum;
        self.answer_words_min = opt_fold(self.answer_words_min, o.answer_words_min, usize::min);
        self.answer_words_max = opt_fold(self.answer_words_max, o.answer_words_max, usize::max);
    }
}

fn opt_fold(a: Option<usize>, b: Option<usize>, f: fn(usize, usize) -> usize) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(f(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn mean(sum: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub mean_headings_per_outline: f64,
    pub mean_abstracts_per_qa: f64,
    pub mean_answer_words: f64,
    pub min_answer_words: Option<usize>,
    pub max_answer_words: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub counts: BTreeMap<RecordKind, KindCounts>,
    pub violations: BTreeMap<RecordKind, Vec<Violation>>,
    pub totals: StatsTotals,
    pub stats: DatasetStats,
}

impl ValidationReport {
    pub fn empty() -> Self {
        let mut r = Self::default();
        for kind in RecordKind::ALL {
            r.counts.insert(kind, KindCounts::default());
            r.violations.insert(kind, Vec::new());
        }
        r
    }

    pub fn count(&self, kind: RecordKind) -> KindCounts {
        self.counts.get(&kind).copied().unwrap_or_default()
    }

    pub fn violation_count(&self) -> usize {
        self.violations.values().map(Vec::len).sum()
    }

    /// Combines two shard reports; associative, with `empty()` as identity.
    pub fn merge(mut self, other: ValidationReport) -> ValidationReport {
        for (kind, c) in other.counts {
            let e = self.counts.entry(kind).or_default();
            e.lines += c.lines;
            e.valid += c.valid;
            e.invalid += c.invalid;
        }
        for (kind, v) in other.violations {
            self.violations.entry(kind).or_default().extend(v);
        }
        self.totals.merge(&other.totals);
        self.refresh_stats();
        self
    }

    fn refresh_stats(&mut self) {
        let t = &self.totals;
        self.stats = DatasetStats {
            mean_headings_per_outline: mean(t.headings, t.outlines),
            mean_abstracts_per_qa: mean(t.qa_abstracts, t.qa_records),
            mean_answer_words: mean(t.answer_words_sum, t.qa_records),
            min_answer_words: t.answer_words_min,
            max_answer_words: t.answer_words_max,
        };
    }

    fn observe(&mut self, record: &Record) {
        let t = &mut self.totals;
        match record {
            Record::Outline(o) => {
                t.outlines += 1;
                t.headings += o.headings.len();
            }
            Record::AbstractSet(_) => {}
            Record::Qa(q) => {
                let words = word_count(&q.answer);
                t.qa_records += 1;
                t.qa_abstracts += q.abstracts.len();
                t.answer_words_sum += words;
                t.answer_words_min = opt_fold(t.answer_words_min, Some(words), usize::min);
                t.answer_words_max = opt_fold(t.answer_words_max, Some(words), usize::max);
            }
        }
    }
}

/// Validates every line of each supplied file. Every non-blank line is counted
/// exactly once as valid or invalid; statistics cover valid records only.
pub fn validate_dataset(paths: &DatasetPaths, decoder: &Decoder) -> Result<ValidationReport, DatasetError> {
    let shards: Vec<Result<ValidationReport, DatasetError>> = RecordKind::ALL
        .par_iter()
        .filter_map(|&kind| paths.get(kind).map(|p| validate_file(p, kind, decoder)))
        .collect();
    let mut report = ValidationReport::empty();
    for shard in shards {
        report = report.merge(shard?);
    }
    Ok(report)
}

pub fn validate_file(path: &Path, kind: RecordKind, decoder: &Decoder) -> Result<ValidationReport, DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut report = ValidationReport::empty();
    let mut counts = KindCounts::default();
    let mut violations = Vec::new();
    let mut sniffed = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        counts.lines += 1;
        let value = decoder.parse_value(&line);
        if !sniffed {
            if let Ok(v) = &value {
                sniffed = true;
                if let Some(found) = RecordKind::sniff(v).filter(|f| *f != kind) {
                    return Err(DatasetError::KindMismatch { path: path.to_path_buf(), expected: kind, found });
                }
            }
        }
        let id = value
            .as_ref()
            .ok()
            .and_then(|v| v.get("id"))
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| format!("line:{line_no}"));
        match value.and_then(|v| decoder.decode_value(v, kind)) {
            Ok(record) => {
                counts.valid += 1;
                report.observe(&record);
            }
            Err(e) => {
                counts.invalid += 1;
                violations.push(Violation { id, line: line_no, rule: e.rule_id().to_string(), message: e.to_string() });
            }
        }
    }
    report.counts.insert(kind, counts);
    report.violations.insert(kind, violations);
    report.refresh_stats();
    Ok(report)
}
