use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    to_sorted_json, AbstractSetRecord, Decoder, OutlineRecord, QaRecord, Record, RecordError, RecordKind,
};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: RecordError,
    },
}

impl IoError {
    pub fn rule_id(&self) -> &'static str {
        match self {
            Self::Io { .. } => "E_IO",
            Self::Record { source, .. } => source.rule_id(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// All three record kinds of one dataset directory, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub outlines: Vec<OutlineRecord>,
    pub abstract_sets: Vec<AbstractSetRecord>,
    pub qa: Vec<QaRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.outlines.len() + self.abstract_sets.len() + self.qa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads the standard files in `dir`; absent files are empty. The first
    /// bad line fails the read.
    pub fn read_dir(dir: &Path, decoder: &Decoder) -> Result<Self, IoError> {
        let mut out = Self::default();
        for kind in RecordKind::ALL {
            let path = dir.join(kind.file_name());
            if !path.is_file() {
                continue;
            }
            for record in read_records(&path, kind, decoder)? {
                match record {
                    Record::Outline(r) => out.outlines.push(r),
                    Record::AbstractSet(r) => out.abstract_sets.push(r),
                    Record::Qa(r) => out.qa.push(r),
                }
            }
        }
        Ok(out)
    }

    /// Writes every kind that has records, replacing existing files.
    pub fn write_dir(&self, dir: &Path) -> Result<(), IoError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_jsonl(&dir.join(RecordKind::Outline.file_name()), &self.outlines)?;
        write_jsonl(&dir.join(RecordKind::AbstractSet.file_name()), &self.abstract_sets)?;
        write_jsonl(&dir.join(RecordKind::Qa.file_name()), &self.qa)
    }
}

pub fn read_records(path: &Path, kind: RecordKind, decoder: &Decoder) -> Result<Vec<Record>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = decoder
            .decode(&line, kind)
            .map_err(|source| IoError::Record { path: path.to_path_buf(), line: i + 1, source })?;
        out.push(record);
    }
    Ok(out)
}

/// One sorted-key JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for item in items {
        writeln!(w, "{}", to_sorted_json(item)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads any line-delimited JSON file without record checks.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| IoError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            source: RecordError::Type(e.to_string()),
        })?;
        out.push(v);
    }
    Ok(out)
}
