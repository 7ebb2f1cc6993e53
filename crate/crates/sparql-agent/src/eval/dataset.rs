//! Benchmark dataset loading.
//!
//! A dataset is a list of questions with their ground-truth queries,
//! stored either as JSON lines or as one JSON array. Field names vary
//! between published benchmarks, so the loader accepts the common
//! aliases and normalizes everything into [`BenchmarkSample`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub id: String,
    pub question: String,
    /// Ground-truth query; never empty.
    pub sparql: String,
    pub kg: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is not valid JSON: {problem}")]
    Format { path: PathBuf, problem: String },
    #[error("record {n}: {problem}")]
    Record { n: usize, problem: String },
}

#[derive(Deserialize)]
struct RawSample {
    #[serde(default)]
    id: Option<Value>,
    question: Option<String>,
    #[serde(alias = "query", alias = "gt_sparql")]
    sparql: Option<String>,
    #[serde(alias = "dataset", alias = "graph")]
    kg: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

/// Load a dataset file. `default_kg` fills in records that do not name
/// their graph; records lacking an id get their one-based position.
pub fn load_dataset(
    path: impl AsRef<Path>,
    default_kg: Option<&str>,
) -> Result<Vec<BenchmarkSample>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let raw: Vec<(usize, RawSample)> = if text.trim_start().starts_with('[') {
        let all: Vec<RawSample> =
            serde_json::from_str(&text).map_err(|e| DatasetError::Format {
                path: path.to_path_buf(),
                problem: e.to_string(),
            })?;
        all.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect()
    } else {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: RawSample =
                serde_json::from_str(line).map_err(|e| DatasetError::Record {
                    n: i + 1,
                    problem: format!("invalid JSON: {e}"),
                })?;
            records.push((i + 1, record));
        }
        records
    };

    let mut samples = Vec::with_capacity(raw.len());
    for (n, record) in raw {
        let invalid = |problem: &str| DatasetError::Record {
            n,
            problem: problem.to_string(),
        };
        let id = match record.id {
            Some(Value::String(s)) if !s.trim().is_empty() => s,
            Some(Value::Number(num)) => num.to_string(),
            Some(_) => return Err(invalid("id must be a string or number")),
            None => n.to_string(),
        };
        let question = record
            .question
            .filter(|q| !q.trim().is_empty())
            .ok_or_else(|| invalid("missing question"))?;
        let sparql = record
            .sparql
            .filter(|q| !q.trim().is_empty())
            .ok_or_else(|| invalid("missing or empty sparql"))?;
        let kg = record
            .kg
            .or_else(|| default_kg.map(String::from))
            .ok_or_else(|| invalid("no kg field and no default graph given"))?;
        samples.push(BenchmarkSample {
            id,
            question,
            sparql,
            kg,
            split: record.split,
        });
    }
    Ok(samples)
}
