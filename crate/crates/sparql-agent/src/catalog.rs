//! Knowledge-graph catalog: per-graph configuration and index source data.
//!
//! The catalog is a TOML document with one `[[graphs]]` section per
//! knowledge graph plus optional `[chat]` and `[embeddings]` sections for
//! the model transport and the embedding provider. Index source data is
//! UTF-8 TSV with columns `iri  label  score  synonyms  infos`, lists
//! `;`-separated, one header line, rows ordered by non-increasing score.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::prefix::PrefixTable;

/// Whether a record names an entity or a property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Entity,
    Property,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemKind::Entity => write!(f, "entity"),
            ItemKind::Property => write!(f, "property"),
        }
    }
}

impl std::str::FromStr for ItemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entity" => Ok(ItemKind::Entity),
            "property" => Ok(ItemKind::Property),
            other => Err(format!("unknown item kind `{other}`")),
        }
    }
}

/// One indexed entity or property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    /// Absolute IRI; prefixed IRIs in source files are expanded at load.
    pub iri: String,
    pub label: String,
    /// Popularity score used for ranking tie-breaks.
    pub score: u32,
    pub synonyms: Vec<String>,
    pub infos: Vec<String>,
    pub kind: ItemKind,
}

impl ItemRecord {
    /// Label plus synonyms; every alias is indexed the same way.
    pub fn aliases(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.label.as_str()).chain(self.synonyms.iter().map(String::as_str))
    }
}

/// Configuration of one knowledge graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeGraphConfig {
    pub name: String,
    /// Absolute URL of the SPARQL service.
    pub endpoint: String,
    pub prefixes: PrefixTable,
    pub entity_data_path: Option<PathBuf>,
    pub property_data_path: Option<PathBuf>,
    pub example_store_path: Option<PathBuf>,
    /// Extra HTTP headers (auth tokens) sent with every endpoint request.
    pub headers: BTreeMap<String, String>,
}

/// Chat endpoint settings. The model id may use the `scripted:<path>`
/// scheme to replay a recorded script instead of calling a service.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    pub url: Option<String>,
    pub model: String,
    pub api_key_env: Option<String>,
}

/// Embedding provider settings. `provider = "hash"` selects the
/// deterministic offline provider; `provider = "http"` a remote service.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsConfig {
    pub provider: String,
    pub url: Option<String>,
    pub model: Option<String>,
    pub dimension: Option<usize>,
    pub api_key_env: Option<String>,
}

impl Default for EmbeddingsConfig {
    fn default() -> Self {
        Self {
            provider: "hash".to_string(),
            url: None,
            model: None,
            dimension: None,
            api_key_env: None,
        }
    }
}

/// All registered knowledge graphs plus shared provider settings.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    graphs: BTreeMap<String, KnowledgeGraphConfig>,
    pub chat: Option<ChatConfig>,
    pub embeddings: Option<EmbeddingsConfig>,
}

impl Catalog {
    pub fn lookup(&self, name: &str) -> Option<&KnowledgeGraphConfig> {
        self.graphs.get(name)
    }

    /// Graphs in name order.
    pub fn graphs(&self) -> impl Iterator<Item = &KnowledgeGraphConfig> {
        self.graphs.values()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Register a graph programmatically. Used by tests and examples that
    /// point a loaded catalog at an in-process fixture endpoint.
    pub fn insert(&mut self, kg: KnowledgeGraphConfig) -> Result<(), CatalogError> {
        if self.graphs.contains_key(&kg.name) {
            return Err(CatalogError::DuplicateGraph(kg.name));
        }
        self.graphs.insert(kg.name.clone(), kg);
        Ok(())
    }

    /// Point an already registered graph at a different endpoint.
    pub fn set_endpoint(&mut self, name: &str, endpoint: &str) -> Result<(), CatalogError> {
        match self.graphs.get_mut(name) {
            Some(kg) => {
                kg.endpoint = endpoint.to_string();
                Ok(())
            }
            None => Err(CatalogError::UnknownGraph(name.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed catalog: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("catalog declares no graphs")]
    Empty,
    #[error("duplicate graph name `{0}`")]
    DuplicateGraph(String),
    #[error("unknown graph `{0}`")]
    UnknownGraph(String),
    #[error("graph `{graph}`: malformed endpoint `{endpoint}`")]
    BadEndpoint { graph: String, endpoint: String },
    #[error("graph `{graph}`: duplicate prefix `{prefix}`")]
    DuplicatePrefix { graph: String, prefix: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    #[serde(default)]
    chat: Option<ChatConfig>,
    #[serde(default)]
    embeddings: Option<EmbeddingsConfig>,
    graphs: Vec<GraphSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    name: String,
    endpoint: String,
    #[serde(default)]
    prefixes: Vec<(String, String)>,
    #[serde(default)]
    entity_data_path: Option<PathBuf>,
    #[serde(default)]
    property_data_path: Option<PathBuf>,
    #[serde(default)]
    example_store_path: Option<PathBuf>,
    #[serde(default)]
    headers: BTreeMap<String, String>,
}

/// Load a catalog from a TOML document. Unknown fields are rejected.
/// Relative data paths are resolved against the document's directory.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: CatalogFile = toml::from_str(&text)?;
    if file.graphs.is_empty() {
        return Err(CatalogError::Empty);
    }
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));

    let mut catalog = Catalog {
        graphs: BTreeMap::new(),
        chat: file.chat,
        embeddings: file.embeddings,
    };
    for section in file.graphs {
        let url = Url::parse(&section.endpoint).map_err(|_| CatalogError::BadEndpoint {
            graph: section.name.clone(),
            endpoint: section.endpoint.clone(),
        })?;
        if url.cannot_be_a_base() || !url.has_host() {
            return Err(CatalogError::BadEndpoint {
                graph: section.name,
                endpoint: section.endpoint,
            });
        }
        let mut seen = HashSet::new();
        for (prefix, _) in &section.prefixes {
            if !seen.insert(prefix.clone()) {
                return Err(CatalogError::DuplicatePrefix {
                    graph: section.name,
                    prefix: prefix.clone(),
                });
            }
        }
        let resolve = |p: Option<PathBuf>| {
            p.map(|p| {
                if p.is_absolute() {
                    p
                } else {
                    base_dir.join(p)
                }
            })
        };
        let kg = KnowledgeGraphConfig {
            name: section.name.clone(),
            endpoint: section.endpoint,
            prefixes: PrefixTable::from_pairs(section.prefixes),
            entity_data_path: resolve(section.entity_data_path),
            property_data_path: resolve(section.property_data_path),
            example_store_path: resolve(section.example_store_path),
            headers: section.headers,
        };
        catalog.insert(kg)?;
    }
    Ok(catalog)
}

#[derive(Debug, Error)]
pub enum ItemDataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line 1: expected header `iri\tlabel\tscore\tsynonyms\tinfos`")]
    BadHeader,
    #[error("line {line}: expected 5 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid score `{value}`")]
    BadScore { line: usize, value: String },
    #[error("line {line}: score {current} exceeds preceding score {previous} (rows must be ordered by non-increasing score)")]
    ScoreOrder {
        line: usize,
        previous: u64,
        current: u64,
    },
    #[error("line {line}: empty IRI")]
    EmptyIri { line: usize },
}

const ITEM_HEADER: &str = "iri\tlabel\tscore\tsynonyms\tinfos";

/// Records loaded from one TSV dump.
#[derive(Debug, Clone)]
pub struct ItemFile {
    pub records: Vec<ItemRecord>,
    /// Rows dropped for an empty label; dirty dumps are expected at scale.
    pub skipped_empty_label: usize,
}

fn split_list(cell: &str) -> Vec<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Load index source data from its TSV format.
///
/// Validates the header, column counts, integer scores within `u32`, and
/// the non-increasing score order. Prefixed IRIs are expanded to absolute
/// form with `prefixes`. Synonyms equal to the label or to an earlier
/// synonym are dropped so aliases stay distinct. IRI uniqueness is a
/// contract of the dump and is not re-checked here.
pub fn load_item_records(
    path: impl AsRef<Path>,
    kind: ItemKind,
    prefixes: &PrefixTable,
) -> Result<ItemFile, ItemDataError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| ItemDataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    parse_item_records(reader, kind, prefixes).map_err(|e| match e {
        ItemDataError::Io { source, .. } => ItemDataError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parse records from any reader; see [`load_item_records`].
pub fn parse_item_records(
    reader: impl BufRead,
    kind: ItemKind,
    prefixes: &PrefixTable,
) -> Result<ItemFile, ItemDataError> {
    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut previous_score: Option<u64> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| ItemDataError::Io {
            path: PathBuf::new(),
            source,
        })?;
        let line_no = idx + 1;
        if line_no == 1 {
            if line.trim_start_matches('\u{feff}') != ITEM_HEADER {
                return Err(ItemDataError::BadHeader);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 5 {
            return Err(ItemDataError::ColumnCount {
                line: line_no,
                found: cells.len(),
            });
        }
        let score: u64 = cells[2]
            .trim()
            .parse()
            .map_err(|_| ItemDataError::BadScore {
                line: line_no,
                value: cells[2].trim().to_string(),
            })?;
        if score > u64::from(u32::MAX) {
            return Err(ItemDataError::BadScore {
                line: line_no,
                value: cells[2].trim().to_string(),
            });
        }
        if let Some(prev) = previous_score {
            if score > prev {
                return Err(ItemDataError::ScoreOrder {
                    line: line_no,
                    previous: prev,
                    current: score,
                });
            }
        }
        previous_score = Some(score);

        let iri_cell = cells[0].trim();
        if iri_cell.is_empty() {
            return Err(ItemDataError::EmptyIri { line: line_no });
        }
        let label = cells[1].trim().to_string();
        if label.is_empty() {
            skipped += 1;
            continue;
        }
        let mut synonyms: Vec<String> = Vec::new();
        for syn in split_list(cells[3]) {
            if syn != label && !synonyms.contains(&syn) {
                synonyms.push(syn);
            }
        }

        records.push(ItemRecord {
            iri: prefixes.expand(iri_cell),
            label,
            score: score as u32,
            synonyms,
            infos: split_list(cells[4]),
            kind,
        });
    }
    Ok(ItemFile {
        records,
        skipped_empty_label: skipped,
    })
}

/// Serialize records back to the TSV dump format. Re-loading the output
/// yields identical records (IRIs are written in absolute form).
pub fn write_item_records(
    mut out: impl Write,
    records: &[ItemRecord],
) -> io::Result<()> {
    writeln!(out, "{ITEM_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.iri,
            r.label,
            r.score,
            r.synonyms.join("; "),
            r.infos.join("; ")
        )?;
    }
    Ok(())
}
