//! Exact cosine-similarity search over embedded items.
//!
//! The index is a flat matrix of unit vectors; search is a full scan of
//! dot products. Property vocabularies stay small enough that exact
//! search is the contract here, and approximate structures are out of
//! scope. Embeddings come from a pluggable provider; the provider's id
//! is recorded at build time and enforced at query time so an index is
//! never silently searched with vectors from a different space.

mod file;

pub use file::{load_vector_index, PayloadKind};

use std::collections::HashSet;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{EmbeddingsConfig, ItemRecord};
use crate::keyword::{tokenize, SearchHit, SearchResponse};

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("cannot build an index over zero items")]
    Empty,
    #[error("index was built with provider {index_id:?} but queried with {provider_id:?}")]
    ProviderMismatch { index_id: String, provider_id: String },
    #[error("provider returned a vector of dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("provider returned {got} vectors for {expected} texts")]
    Count { expected: usize, got: usize },
    #[error("embedding batch {batch} failed after {attempts} attempts: {message}")]
    Provider {
        batch: usize,
        attempts: u32,
        message: String,
    },
}

/// Turns texts into fixed-dimension vectors. The same text must map to
/// the same vector for one provider id; ids therefore encode model and
/// dimension choices.
pub trait EmbeddingProvider {
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String>;
}

/// Deterministic offline provider: hash each token into one of `d`
/// buckets, count, L2-normalize. No network, no weights; meant for
/// tests, examples and CI.
pub struct HashEmbedding {
    dimension: usize,
}

impl HashEmbedding {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashEmbedding { dimension }
    }
}

impl Default for HashEmbedding {
    fn default() -> Self {
        HashEmbedding::new(64)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl EmbeddingProvider for HashEmbedding {
    fn id(&self) -> String {
        format!("token-hash-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0f32; self.dimension];
                for token in tokenize(text) {
                    let bucket = (fnv1a(token.as_bytes()) % self.dimension as u64) as usize;
                    v[bucket] += 1.0;
                }
                normalize(&mut v);
                v
            })
            .collect())
    }
}

/// Remote embedding service speaking the common JSON shape
/// `{"model": ..., "input": [texts]}` → `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbedding {
    url: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEmbedding {
    pub fn new(url: impl Into<String>, model: impl Into<String>, dimension: usize) -> Self {
        HttpEmbedding {
            url: url.into(),
            model: model.into(),
            dimension,
            api_key: None,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }
}

impl EmbeddingProvider for HttpEmbedding {
    fn id(&self) -> String {
        format!("{}-{}", self.model, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
        #[derive(serde::Deserialize)]
        struct Item {
            embedding: Vec<f32>,
        }
        #[derive(serde::Deserialize)]
        struct Reply {
            data: Vec<Item>,
        }
        let mut request = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        if !response.status().is_success() {
            let status = response.status();
            let body = response.text().unwrap_or_default();
            return Err(format!("{status}: {body}"));
        }
        let reply: Reply = response.json().map_err(|e| e.to_string())?;
        Ok(reply
            .data
            .into_iter()
            .map(|item| {
                let mut v = item.embedding;
                normalize(&mut v);
                v
            })
            .collect())
    }
}

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

/// Construct the provider a configuration selects. `None` means the
/// deterministic hash provider at its default dimension.
pub fn provider_from_config(
    config: Option<&EmbeddingsConfig>,
) -> Result<Box<dyn EmbeddingProvider + Send + Sync>, String> {
    let Some(config) = config else {
        return Ok(Box::new(HashEmbedding::default()));
    };
    match config.provider.as_str() {
        "hash" => Ok(Box::new(match config.dimension {
            Some(d) => HashEmbedding::new(d),
            None => HashEmbedding::default(),
        })),
        "http" => {
            let url = config
                .url
                .as_deref()
                .ok_or("http embeddings need a url")?;
            let model = config
                .model
                .as_deref()
                .ok_or("http embeddings need a model")?;
            let dimension = config.dimension.ok_or("http embeddings need a dimension")?;
            let mut provider = HttpEmbedding::new(url, model, dimension);
            if let Some(var) = &config.api_key_env {
                match std::env::var(var) {
                    Ok(key) => provider = provider.with_api_key(key),
                    Err(_) => return Err(format!("environment variable {var} is not set")),
                }
            }
            Ok(Box::new(provider))
        }
        other => Err(format!("unknown embedding provider `{other}`")),
    }
}

/// The canonical text embedded for an item: the label, plus up to three
/// infos in parentheses to split same-label items apart.
pub fn embed_item_text(record: &ItemRecord) -> String {
    if record.infos.is_empty() {
        record.label.clone()
    } else {
        let infos: Vec<&str> = record.infos.iter().take(3).map(String::as_str).collect();
        format!("{} ({})", record.label, infos.join("; "))
    }
}

/// What the index stores alongside each vector. `key` orders final
/// tie-breaks and answers `restrict_to`; `tie_score` is the popularity
/// tie-break applied before the key.
pub trait VectorPayload: Clone + Serialize + DeserializeOwned {
    const KIND: PayloadKind;
    fn key(&self) -> &str;
    fn tie_score(&self) -> u32;
    fn embed_text(&self) -> String;
}

impl VectorPayload for ItemRecord {
    const KIND: PayloadKind = PayloadKind::Item;

    fn key(&self) -> &str {
        &self.iri
    }

    fn tie_score(&self) -> u32 {
        self.score
    }

    fn embed_text(&self) -> String {
        embed_item_text(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a, T> {
    pub similarity: f32,
    pub payload: &'a T,
}

pub struct VectorIndex<T> {
    /// Row-major `n x d`, rows unit-normalized (or all-zero when the
    /// text had no tokens).
    matrix: Vec<f32>,
    dimension: usize,
    provider_id: String,
    items: Vec<T>,
}

impl<T> std::fmt::Debug for VectorIndex<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorIndex")
            .field("n", &self.items.len())
            .field("dimension", &self.dimension)
            .field("provider_id", &self.provider_id)
            .finish()
    }
}

pub const DEFAULT_EMBED_BATCH: usize = 256;
const BUILD_ATTEMPTS: u32 = 3;

impl<T: VectorPayload> VectorIndex<T> {
    /// Embed every item in batches and assemble the matrix in item
    /// order. A failing batch is retried a bounded number of times, then
    /// reported with its batch index.
    pub fn build(
        items: Vec<T>,
        provider: &dyn EmbeddingProvider,
        batch: usize,
    ) -> Result<Self, VectorError> {
        if items.is_empty() {
            return Err(VectorError::Empty);
        }
        let batch = batch.max(1);
        let d = provider.dimension();
        let mut matrix = Vec::with_capacity(items.len() * d);
        for (batch_no, chunk) in items.chunks(batch).enumerate() {
            let texts: Vec<String> = chunk.iter().map(|i| i.embed_text()).collect();
            let mut last_err = String::new();
            let mut vectors = None;
            for _ in 0..BUILD_ATTEMPTS {
                match provider.embed(&texts) {
                    Ok(v) => {
                        vectors = Some(v);
                        break;
                    }
                    Err(err) => last_err = err,
                }
            }
            let vectors = vectors.ok_or(VectorError::Provider {
                batch: batch_no,
                attempts: BUILD_ATTEMPTS,
                message: last_err,
            })?;
            if vectors.len() != texts.len() {
                return Err(VectorError::Count {
                    expected: texts.len(),
                    got: vectors.len(),
                });
            }
            for mut v in vectors {
                if v.len() != d {
                    return Err(VectorError::Dimension {
                        expected: d,
                        got: v.len(),
                    });
                }
                normalize(&mut v);
                matrix.extend_from_slice(&v);
            }
        }
        Ok(VectorIndex {
            matrix,
            dimension: d,
            provider_id: provider.id(),
            items,
        })
    }

    pub(crate) fn from_parts(
        matrix: Vec<f32>,
        dimension: usize,
        provider_id: String,
        items: Vec<T>,
    ) -> Self {
        VectorIndex {
            matrix,
            dimension,
            provider_id,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub(crate) fn parts(&self) -> (&[f32], usize, &str, &[T]) {
        (&self.matrix, self.dimension, &self.provider_id, &self.items)
    }

    /// Exact top-k by cosine similarity, then tie score desc, then key
    /// asc. `restrict_to` filters by payload key before ranking.
    pub fn search(
        &self,
        query: &str,
        provider: &dyn EmbeddingProvider,
        k: usize,
        restrict_to: Option<&HashSet<String>>,
    ) -> Result<Vec<Scored<'_, T>>, VectorError> {
        if provider.id() != self.provider_id {
            return Err(VectorError::ProviderMismatch {
                index_id: self.provider_id.clone(),
                provider_id: provider.id(),
            });
        }
        let mut vectors = provider
            .embed(&[query.to_string()])
            .map_err(|message| VectorError::Provider {
                batch: 0,
                attempts: 1,
                message,
            })?;
        if vectors.len() != 1 {
            return Err(VectorError::Count {
                expected: 1,
                got: vectors.len(),
            });
        }
        let mut qv = vectors.pop().expect("one vector");
        if qv.len() != self.dimension {
            return Err(VectorError::Dimension {
                expected: self.dimension,
                got: qv.len(),
            });
        }
        normalize(&mut qv);

        let mut scored: Vec<(f32, usize)> = self
            .items
            .iter()
            .enumerate()
            .filter(|(_, item)| restrict_to.map_or(true, |set| set.contains(item.key())))
            .map(|(row, _)| {
                let offset = row * self.dimension;
                let sim: f32 = self.matrix[offset..offset + self.dimension]
                    .iter()
                    .zip(&qv)
                    .map(|(a, b)| a * b)
                    .sum();
                (sim, row)
            })
            .collect();
        scored.sort_unstable_by(|&(sa, a), &(sb, b)| {
            sb.total_cmp(&sa)
                .then_with(|| self.items[b].tie_score().cmp(&self.items[a].tie_score()))
                .then_with(|| self.items[a].key().cmp(self.items[b].key()))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(similarity, row)| Scored {
                similarity,
                payload: &self.items[row],
            })
            .collect())
    }
}

impl VectorIndex<ItemRecord> {
    /// Item-record convenience wrapper producing the shared hit shape.
    pub fn search_hits(
        &self,
        query: &str,
        provider: &dyn EmbeddingProvider,
        k: usize,
        restrict_to: Option<&HashSet<String>>,
    ) -> Result<SearchResponse, VectorError> {
        let scored = self.search(query, provider, k, restrict_to)?;
        Ok(SearchResponse {
            hits: scored
                .into_iter()
                .enumerate()
                .map(|(i, s)| SearchHit {
                    item: s.payload.clone(),
                    match_score: s.similarity,
                    rank: i + 1,
                })
                .collect(),
            approximate: false,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::catalog::ItemKind;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub fn property(iri: &str, label: &str, score: u32, infos: &[&str]) -> ItemRecord {
        ItemRecord {
            iri: iri.to_string(),
            label: label.to_string(),
            score,
            synonyms: Vec::new(),
            infos: infos.iter().map(|s| s.to_string()).collect(),
            kind: ItemKind::Property,
        }
    }

    #[test]
    fn embed_text_examples() {
        assert_eq!(
            embed_item_text(&property("p", "position held", 0, &[])),
            "position held"
        );
        assert_eq!(
            embed_item_text(&property(
                "http://www.wikidata.org/entity/Q12117",
                "cereal grain",
                147,
                &["fruits (grains) of cereal crops used for food and agricultural products"]
            )),
            "cereal grain (fruits (grains) of cereal crops used for food and agricultural products)"
        );
        assert_eq!(
            embed_item_text(&property("p", "x", 0, &["a", "b", "c", "d", "e"])),
            "x (a; b; c)"
        );
    }

    #[test]
    fn hash_provider_is_deterministic_and_unit_norm() {
        let provider = HashEmbedding::default();
        let texts = vec!["cereal grain".to_string(), "grain cereal".to_string()];
        let a = provider.embed(&texts).unwrap();
        let b = provider.embed(&texts).unwrap();
        assert_eq!(a, b);
        // Bag-of-tokens: word order cannot matter.
        assert_eq!(a[0], a[1]);
        let norm: f32 = a[0].iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
        assert_eq!(a[0].len(), 64);
    }

    #[test]
    fn empty_text_embeds_to_zero() {
        let provider = HashEmbedding::default();
        let v = provider.embed(&["   ".to_string()]).unwrap();
        assert!(v[0].iter().all(|&x| x == 0.0));
    }

    fn corpus() -> Vec<ItemRecord> {
        vec![
            property("http://example.org/p1", "position held", 10, &[]),
            property("http://example.org/p2", "educated at", 20, &["school attended"]),
            property("http://example.org/p3", "award received", 5, &[]),
            property("http://example.org/p4", "cereal grain", 147, &["food crop fruit"]),
        ]
    }

    #[test]
    fn self_similarity_ranks_first() {
        let provider = HashEmbedding::default();
        let index = VectorIndex::build(corpus(), &provider, 2).unwrap();
        let hits = index
            .search("position held", &provider, 4, None)
            .unwrap();
        assert_eq!(hits[0].payload.iri, "http://example.org/p1");
        assert!((hits[0].similarity - 1.0).abs() < 1e-5);
    }

    #[test]
    fn restrict_to_singleton() {
        let provider = HashEmbedding::default();
        let index = VectorIndex::build(corpus(), &provider, 256).unwrap();
        let only: HashSet<String> = ["http://example.org/p3".to_string()].into();
        let hits = index
            .search("position held", &provider, 4, Some(&only))
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].payload.iri, "http://example.org/p3");
    }

    #[test]
    fn empty_build_is_an_error() {
        let provider = HashEmbedding::default();
        assert!(matches!(
            VectorIndex::<ItemRecord>::build(Vec::new(), &provider, 256),
            Err(VectorError::Empty)
        ));
    }

    struct WrongDim;
    impl EmbeddingProvider for WrongDim {
        fn id(&self) -> String {
            "wrong-dim".into()
        }
        fn dimension(&self) -> usize {
            8
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
            Ok(texts.iter().map(|_| vec![1.0; 3]).collect())
        }
    }

    #[test]
    fn wrong_dimension_fails_build() {
        assert!(matches!(
            VectorIndex::build(corpus(), &WrongDim, 256),
            Err(VectorError::Dimension { expected: 8, got: 3 })
        ));
    }

    struct Flaky {
        inner: HashEmbedding,
        failures: std::cell::Cell<u32>,
    }
    impl EmbeddingProvider for Flaky {
        fn id(&self) -> String {
            self.inner.id()
        }
        fn dimension(&self) -> usize {
            self.inner.dimension()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
            if self.failures.get() > 0 {
                self.failures.set(self.failures.get() - 1);
                return Err("transient".into());
            }
            self.inner.embed(texts)
        }
    }

    #[test]
    fn build_retries_transient_provider_failures() {
        let flaky = Flaky {
            inner: HashEmbedding::default(),
            failures: std::cell::Cell::new(2),
        };
        assert!(VectorIndex::build(corpus(), &flaky, 256).is_ok());

        let dead = Flaky {
            inner: HashEmbedding::default(),
            failures: std::cell::Cell::new(99),
        };
        let err = VectorIndex::build(corpus(), &dead, 256).unwrap_err();
        assert!(matches!(err, VectorError::Provider { batch: 0, attempts: 3, .. }));
    }

    #[test]
    fn provider_mismatch_is_an_error() {
        let build_provider = HashEmbedding::new(64);
        let index = VectorIndex::build(corpus(), &build_provider, 256).unwrap();
        let other = HashEmbedding::new(32);
        assert!(matches!(
            index.search("x", &other, 3, None),
            Err(VectorError::ProviderMismatch { .. })
        ));
    }

    /// Exhaustive scoring oracle shared with the acceptance suite.
    pub fn brute_force_cosine(
        items: &[ItemRecord],
        query: &str,
        provider: &dyn EmbeddingProvider,
        k: usize,
    ) -> Vec<(String, f32)> {
        let qv = {
            let mut v = provider.embed(&[query.to_string()]).unwrap().remove(0);
            normalize(&mut v);
            v
        };
        let mut scored: Vec<(String, f32, u32)> = items
            .iter()
            .map(|item| {
                let mut iv = provider.embed(&[embed_item_text(item)]).unwrap().remove(0);
                normalize(&mut iv);
                let sim: f32 = iv.iter().zip(&qv).map(|(a, b)| a * b).sum();
                (item.iri.clone(), sim, item.score)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| b.2.cmp(&a.2))
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        scored.into_iter().map(|(iri, sim, _)| (iri, sim)).collect()
    }

    pub fn random_items(rng: &mut StdRng, n: usize) -> Vec<ItemRecord> {
        let words = [
            "population", "held", "position", "grain", "cereal", "award", "school",
            "born", "place", "date", "author", "paper", "citation",
        ];
        (0..n)
            .map(|i| {
                let n_infos = rng.gen_range(0..2);
                let label = format!(
                    "{} {}",
                    words[rng.gen_range(0..words.len())],
                    words[rng.gen_range(0..words.len())]
                );
                let infos: Vec<String> = (0..n_infos)
                    .map(|_| words[rng.gen_range(0..words.len())].to_string())
                    .collect();
                ItemRecord {
                    iri: format!("http://example.org/p{i:04}"),
                    label,
                    score: rng.gen_range(0..4),
                    synonyms: Vec::new(),
                    infos,
                    kind: ItemKind::Property,
                }
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_corpora() {
        let provider = HashEmbedding::default();
        let mut rng = StdRng::seed_from_u64(2024);
        for round in 0..15 {
            let n = rng.gen_range(1..=60);
            let items = random_items(&mut rng, n);
            let index = VectorIndex::build(items.clone(), &provider, 16).unwrap();
            let query = format!(
                "{} {}",
                ["population", "award", "cereal", "paper"][rng.gen_range(0..4)],
                ["held", "school", "grain", "born"][rng.gen_range(0..4)]
            );
            let k = rng.gen_range(1..=10);
            let expected = brute_force_cosine(&items, &query, &provider, k);
            let got: Vec<(String, f32)> = index
                .search(&query, &provider, k, None)
                .unwrap()
                .into_iter()
                .map(|s| (s.payload.iri.clone(), s.similarity))
                .collect();
            assert_eq!(
                got.iter().map(|(iri, _)| iri).collect::<Vec<_>>(),
                expected.iter().map(|(iri, _)| iri).collect::<Vec<_>>(),
                "round {round} query {query:?}"
            );
            for ((_, a), (_, b)) in got.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn search_hits_carry_ranks() {
        let provider = HashEmbedding::default();
        let index = VectorIndex::build(corpus(), &provider, 256).unwrap();
        let response = index
            .search_hits("educated at", &provider, 3, None)
            .unwrap();
        assert!(!response.approximate);
        assert_eq!(
            response.hits.iter().map(|h| h.rank).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(response.hits[0].item.iri, "http://example.org/p2");
    }
}
