//! Question-SPARQL example pairs and their similarity index.
//!
//! Pairs come from a line-delimited JSON file, one object per line.
//! Field names are accepted loosely (`question` or `utterance`,
//! `sparql` or `query`) since train splits in the wild differ. The
//! store ranks pairs by question embedding similarity and can draw
//! seeded random samples.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vector::{load_vector_index, EmbeddingProvider, PayloadKind, VectorError, VectorIndex, VectorPayload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub question: String,
    pub sparql: String,
    /// Name of the graph the pair belongs to.
    pub kg: String,
}

impl VectorPayload for ExamplePair {
    const KIND: PayloadKind = PayloadKind::Example;

    fn key(&self) -> &str {
        &self.question
    }

    fn tie_score(&self) -> u32 {
        0
    }

    fn embed_text(&self) -> String {
        self.question.clone()
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read examples {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {problem}")]
    Malformed {
        path: PathBuf,
        line: usize,
        problem: String,
    },
    #[error("cannot index examples: {0}")]
    Index(#[from] VectorError),
}

#[derive(Deserialize)]
struct RawPair {
    question: Option<String>,
    utterance: Option<String>,
    sparql: Option<String>,
    query: Option<String>,
}

/// Parse one JSONL line into a pair for graph `kg`.
fn parse_pair(line: &str, kg: &str) -> Result<ExamplePair, String> {
    let raw: RawPair =
        serde_json::from_str(line).map_err(|e| format!("not a JSON object: {e}"))?;
    let question = raw
        .question
        .or(raw.utterance)
        .filter(|q| !q.trim().is_empty())
        .ok_or("missing question (or utterance) field")?;
    let sparql = raw
        .sparql
        .or(raw.query)
        .filter(|s| !s.trim().is_empty())
        .ok_or("missing sparql (or query) field")?;
    Ok(ExamplePair {
        question,
        sparql,
        kg: kg.to_string(),
    })
}

#[derive(Debug)]
pub struct ExampleStore {
    index: VectorIndex<ExamplePair>,
}

impl ExampleStore {
    pub(crate) fn from_index(index: VectorIndex<ExamplePair>) -> Self {
        ExampleStore { index }
    }

    /// Load pairs from `path` and index their questions. A sibling
    /// `<path>.vidx` built by [`ExampleStore::save_index`] is reused
    /// when its provider id matches; otherwise the index is built fresh.
    pub fn open(
        path: &Path,
        kg: &str,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, StoreError> {
        let pairs = load_pairs(path, kg)?;
        let sibling = index_sibling(path);
        if sibling.exists() {
            if let Ok(index) = load_vector_index::<ExamplePair>(&sibling) {
                if index.provider_id() == provider.id() && index.items() == pairs.as_slice() {
                    return Ok(ExampleStore { index });
                }
            }
        }
        let index = VectorIndex::build(pairs, provider, 256)?;
        Ok(ExampleStore { index })
    }

    pub fn save_index(&self, path: &Path) -> Result<(), crate::diskfmt::IndexFileError> {
        self.index.save(&index_sibling(path))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn pairs(&self) -> &[ExamplePair] {
        self.index.items()
    }

    /// The `k` most similar pairs by question embedding.
    pub fn find_similar(
        &self,
        question: &str,
        k: usize,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<&ExamplePair>, VectorError> {
        Ok(self
            .index
            .search(question, provider, k, None)?
            .into_iter()
            .map(|s| s.payload)
            .collect())
    }

    /// `k` pairs drawn without replacement; a fixed seed draws the same
    /// pairs in the same order.
    pub fn sample_random(&self, k: usize, rng: &mut StdRng) -> Vec<&ExamplePair> {
        let pairs = self.index.items();
        let k = k.min(pairs.len());
        rand::seq::index::sample(rng, pairs.len(), k)
            .into_iter()
            .map(|i| &pairs[i])
            .collect()
    }
}

fn index_sibling(path: &Path) -> PathBuf {
    crate::diskfmt::sibling_path(path, ".vidx")
}

fn load_pairs(path: &Path, kg: &str) -> Result<Vec<ExamplePair>, StoreError> {
    let file = File::open(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = parse_pair(&line, kg).map_err(|problem| StoreError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            problem,
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}
