//! JSON-lines corpus records.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tikzgym_core::judge::{BenchmarkTier, JudgeScores};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "scitikz/1";

fn schema_default() -> String {
    SCHEMA.to_string()
}

/// Pipeline position of a record. Variants are declared in stage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Raw,
    Wrapped,
    Compiled,
    Repaired,
    Sanitized,
    Judged,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    #[serde(default = "schema_default")]
    pub schema: String,
    pub id: String,
    pub source: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeScores>,
    #[serde(default)]
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<BenchmarkTier>,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, source: impl Into<String>, code: impl Into<String>) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            id: id.into(),
            source: source.into(),
            code: code.into(),
            image_ref: None,
            token_count: 0,
            aspect_ratio: None,
            judge: None,
            status: Status::Raw,
            reject_reason: None,
            tier: None,
        }
    }

    pub fn reject(&mut self, reason: impl Into<String>) {
        self.status = Status::Rejected;
        self.reject_reason = Some(reason.into());
    }
}

/// Reads one record per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads sample records, checking the schema tag, id uniqueness and any
/// embedded judge scores.
pub fn read_corpus(path: &Path) -> Result<Vec<SampleRecord>> {
    let records: Vec<SampleRecord> = read_jsonl(path)?;
    let mut seen = std::collections::BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        let bad = |message: String| Error::Corpus { path: path.to_path_buf(), line: i + 1, message };
        if r.schema != SCHEMA {
            return Err(bad(format!("unsupported schema `{}`", r.schema)));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(bad(format!("duplicate id `{}`", r.id)));
        }
        if let Some(j) = &r.judge {
            j.validate().map_err(|e| bad(format!("judge scores: {e}")))?;
        }
    }
    Ok(records)
}
