//! Per-graph resources behind the functions: the endpoint client, the
//! entity and property indexes, and the example store.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::catalog::{load_item_records, Catalog, ItemKind, ItemRecord, KnowledgeGraphConfig};
use crate::diskfmt::sibling_path;
use crate::keyword::{KeywordIndex, KeywordIndexDisk, KeywordSearch, POSTING_CAP};
use crate::sparql::SparqlClient;
use crate::store::ExampleStore;
use crate::toolbox::ToolboxError;
use crate::vector::{
    load_vector_index, provider_from_config, EmbeddingProvider, VectorIndex, DEFAULT_EMBED_BATCH,
};

pub const KEYWORD_INDEX_SUFFIX: &str = ".kwix";
pub const VECTOR_INDEX_SUFFIX: &str = ".vidx";

#[derive(Debug, Clone)]
pub struct ToolboxOptions {
    /// Build indexes in memory when no usable index file sits next to
    /// the source data. Off, a missing file is an error; useful when a
    /// deployment requires prebuilt indexes.
    pub build_missing_indexes: bool,
    pub posting_cap: usize,
}

impl Default for ToolboxOptions {
    fn default() -> Self {
        ToolboxOptions {
            build_missing_indexes: true,
            posting_cap: POSTING_CAP,
        }
    }
}

/// Everything the functions need for one knowledge graph.
pub struct GraphResources {
    pub config: KnowledgeGraphConfig,
    pub(crate) client: SparqlClient,
    pub(crate) entities: Option<Box<dyn KeywordSearch + Send + Sync>>,
    pub(crate) properties: Option<VectorIndex<ItemRecord>>,
    /// Property IRI to (score, label); answers membership and label
    /// lookups without scanning the vector index.
    pub(crate) property_meta: HashMap<String, (u32, String)>,
    pub(crate) examples: Option<ExampleStore>,
}

impl GraphResources {
    pub(crate) fn prepare(
        config: &KnowledgeGraphConfig,
        provider: &dyn EmbeddingProvider,
        options: &ToolboxOptions,
    ) -> Result<GraphResources, ToolboxError> {
        let fail = |problem: String| ToolboxError::Resource {
            kg: config.name.clone(),
            problem,
        };

        let entities: Option<Box<dyn KeywordSearch + Send + Sync>> =
            match &config.entity_data_path {
                Some(path) => Some(open_entity_index(config, path, options).map_err(fail)?),
                None => None,
            };

        let properties = match &config.property_data_path {
            Some(path) => Some(open_property_index(config, path, provider, options).map_err(fail)?),
            None => None,
        };
        let property_meta = properties
            .as_ref()
            .map(|index| {
                index
                    .items()
                    .iter()
                    .map(|r| (r.iri.clone(), (r.score, r.label.clone())))
                    .collect()
            })
            .unwrap_or_default();

        let examples = match &config.example_store_path {
            Some(path) => Some(
                ExampleStore::open(path, &config.name, provider)
                    .map_err(|e| fail(e.to_string()))?,
            ),
            None => None,
        };

        Ok(GraphResources {
            config: config.clone(),
            client: SparqlClient::for_graph(config),
            entities,
            properties,
            property_meta,
            examples,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entities.as_ref().map_or(0, |e| e.len())
    }

    pub fn property_count(&self) -> usize {
        self.properties.as_ref().map_or(0, |p| p.len())
    }

    pub fn example_count(&self) -> usize {
        self.examples.as_ref().map_or(0, |e| e.len())
    }

    /// Label for an IRI if either index knows it.
    pub(crate) fn label_of(&self, iri: &str) -> Option<String> {
        if let Some((_, label)) = self.property_meta.get(iri) {
            return Some(label.clone());
        }
        self.entities
            .as_ref()
            .and_then(|e| e.item_by_iri(iri))
            .map(|r| r.label)
    }

    /// Popularity score for an IRI, zero when unknown.
    pub(crate) fn score_of(&self, iri: &str) -> u32 {
        if let Some((score, _)) = self.property_meta.get(iri) {
            return *score;
        }
        self.entities
            .as_ref()
            .and_then(|e| e.item_by_iri(iri))
            .map_or(0, |r| r.score)
    }
}

fn open_entity_index(
    config: &KnowledgeGraphConfig,
    path: &Path,
    options: &ToolboxOptions,
) -> Result<Box<dyn KeywordSearch + Send + Sync>, String> {
    let index_path = sibling_path(path, KEYWORD_INDEX_SUFFIX);
    if index_path.exists() {
        let disk = KeywordIndexDisk::open(&index_path)
            .map_err(|e| format!("cannot open {}: {e}", index_path.display()))?
            .with_posting_cap(options.posting_cap);
        return Ok(Box::new(disk));
    }
    if !options.build_missing_indexes {
        return Err(format!(
            "no entity index at {}; build indexes first",
            index_path.display()
        ));
    }
    let file = load_item_records(path, ItemKind::Entity, &config.prefixes)
        .map_err(|e| e.to_string())?;
    Ok(Box::new(
        KeywordIndex::build(file.records).with_posting_cap(options.posting_cap),
    ))
}

fn open_property_index(
    config: &KnowledgeGraphConfig,
    path: &Path,
    provider: &dyn EmbeddingProvider,
    options: &ToolboxOptions,
) -> Result<VectorIndex<ItemRecord>, String> {
    let index_path = sibling_path(path, VECTOR_INDEX_SUFFIX);
    if index_path.exists() {
        let index = load_vector_index::<ItemRecord>(&index_path)
            .map_err(|e| format!("cannot open {}: {e}", index_path.display()))?;
        if index.provider_id() == provider.id() {
            return Ok(index);
        }
        if !options.build_missing_indexes {
            return Err(format!(
                "{} was built with provider {} but this run uses {}",
                index_path.display(),
                index.provider_id(),
                provider.id()
            ));
        }
    } else if !options.build_missing_indexes {
        return Err(format!(
            "no property index at {}; build indexes first",
            index_path.display()
        ));
    }
    let file = load_item_records(path, ItemKind::Property, &config.prefixes)
        .map_err(|e| e.to_string())?;
    VectorIndex::build(file.records, provider, DEFAULT_EMBED_BATCH).map_err(|e| e.to_string())
}

/// Build and write the index files for one graph next to its source
/// data. Returns the paths written.
pub fn build_graph_indexes(
    config: &KnowledgeGraphConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<PathBuf>, ToolboxError> {
    let fail = |problem: String| ToolboxError::Resource {
        kg: config.name.clone(),
        problem,
    };
    let mut written = Vec::new();
    if let Some(path) = &config.entity_data_path {
        let file = load_item_records(path, ItemKind::Entity, &config.prefixes)
            .map_err(|e| fail(e.to_string()))?;
        let index = KeywordIndex::build(file.records);
        let out = sibling_path(path, KEYWORD_INDEX_SUFFIX);
        index.save(&out).map_err(|e| fail(e.to_string()))?;
        written.push(out);
    }
    if let Some(path) = &config.property_data_path {
        let file = load_item_records(path, ItemKind::Property, &config.prefixes)
            .map_err(|e| fail(e.to_string()))?;
        let index = VectorIndex::build(file.records, provider, DEFAULT_EMBED_BATCH)
            .map_err(|e| fail(e.to_string()))?;
        let out = sibling_path(path, VECTOR_INDEX_SUFFIX);
        index.save(&out).map_err(|e| fail(e.to_string()))?;
        written.push(out);
    }
    if let Some(path) = &config.example_store_path {
        let store = ExampleStore::open(path, &config.name, provider)
            .map_err(|e| fail(e.to_string()))?;
        store.save_index(path).map_err(|e| fail(e.to_string()))?;
        written.push(sibling_path(path, VECTOR_INDEX_SUFFIX));
    }
    Ok(written)
}

/// The function host: every registered graph's resources plus the one
/// embedding provider shared by all of them.
pub struct Toolbox {
    pub(crate) graphs: BTreeMap<String, GraphResources>,
    pub(crate) provider: Box<dyn EmbeddingProvider + Send + Sync>,
}

impl Toolbox {
    pub fn from_catalog(catalog: &Catalog, options: &ToolboxOptions) -> Result<Self, ToolboxError> {
        let provider =
            provider_from_config(catalog.embeddings.as_ref()).map_err(|problem| {
                ToolboxError::Resource {
                    kg: "*".to_string(),
                    problem,
                }
            })?;
        let mut graphs = BTreeMap::new();
        for config in catalog.graphs() {
            let resources = GraphResources::prepare(config, provider.as_ref(), options)?;
            graphs.insert(config.name.clone(), resources);
        }
        Ok(Toolbox { graphs, provider })
    }

    pub fn graph(&self, kg: &str) -> Option<&GraphResources> {
        self.graphs.get(kg)
    }

    /// Graph names in iteration order (sorted).
    pub fn graph_names(&self) -> Vec<&str> {
        self.graphs.keys().map(String::as_str).collect()
    }

    /// `(name, endpoint)` for every graph, in name order.
    pub fn graph_endpoints(&self) -> Vec<(String, String)> {
        self.graphs
            .values()
            .map(|g| (g.config.name.clone(), g.config.endpoint.clone()))
            .collect()
    }

    pub fn provider(&self) -> &(dyn EmbeddingProvider + Send + Sync) {
        self.provider.as_ref()
    }
}
