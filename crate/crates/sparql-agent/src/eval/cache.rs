//! On-disk cache of ground-truth query results.
//!
//! Benchmark reruns should not re-execute hundreds of ground-truth
//! queries against public endpoints. Results are keyed by a digest of
//! (endpoint, query) and written atomically via a temporary file and
//! rename, so concurrent workers can share one cache directory. Only
//! successful results are cached; failures may be transient.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::sparql::{QueryError, ResultTable, SparqlClient};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct GtCache {
    dir: PathBuf,
}

impl GtCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        GtCache { dir: dir.into() }
    }

    pub fn key(endpoint: &str, query: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(endpoint.as_bytes());
        hasher.update([0u8]);
        hasher.update(query.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn path_for(&self, endpoint: &str, query: &str) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(endpoint, query)))
    }

    /// A cached table, or None on miss or an unreadable entry.
    pub fn load(&self, endpoint: &str, query: &str) -> Option<ResultTable> {
        let path = self.path_for(endpoint, query);
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(table) => Some(table),
            Err(e) => {
                log::warn!("discarding unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    /// Best effort; a failed write only costs a re-execution later.
    pub fn store(&self, endpoint: &str, query: &str, table: &ResultTable) {
        let path = self.path_for(endpoint, query);
        if let Err(e) = self.write_atomic(&path, table) {
            log::warn!("cannot write cache entry {}: {e}", path.display());
        }
    }

    fn write_atomic(&self, path: &Path, table: &ResultTable) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, serde_json::to_string(table)?)?;
        std::fs::rename(&tmp, path)
    }

    /// Execute through the cache.
    pub fn fetch(&self, client: &SparqlClient, query: &str) -> Result<ResultTable, QueryError> {
        if let Some(table) = self.load(client.endpoint(), query) {
            return Ok(table);
        }
        let table = client.execute(query)?;
        self.store(client.endpoint(), query, &table);
        Ok(table)
    }
}
