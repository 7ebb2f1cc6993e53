//! Build index files from TSV dumps and reopen them from disk.
//!
//! The toolbox builds indexes in memory on demand, but large graphs
//! want them prebuilt: the keyword index reopens memory-mapped style
//! from its file, and the vector index is reused only when its
//! embedding provider matches. In-memory and on-disk forms rank
//! identically by contract.
//!
//!     cargo run --example index_files

use std::path::Path;

use sparql_agent::catalog::{load_item_records, ItemKind};
use sparql_agent::keyword::{KeywordIndex, KeywordIndexDisk, KeywordSearch};
use sparql_agent::prefix::PrefixTable;
use sparql_agent::catalog::ItemRecord;
use sparql_agent::vector::{load_vector_index, HashEmbedding, VectorIndex};

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let out = std::env::temp_dir().join(format!("index-files-{}", std::process::id()));
    std::fs::create_dir_all(&out).expect("scratch dir");

    let prefixes = PrefixTable::from_pairs(vec![
        ("wd", "http://www.wikidata.org/entity/"),
        ("wdt", "http://www.wikidata.org/prop/direct/"),
    ]);

    // Entities: keyword index, written and reopened from disk.
    let entities = load_item_records(data.join("demo-entities.tsv"), ItemKind::Entity, &prefixes)
        .expect("load entities");
    println!(
        "loaded {} entities ({} rows skipped for empty labels)",
        entities.records.len(),
        entities.skipped_empty_label
    );
    let kwix_path = out.join("entities.kwix");
    let built = KeywordIndex::build(entities.records);
    built.save(&kwix_path).expect("save keyword index");
    let disk = KeywordIndexDisk::open(&kwix_path).expect("reopen keyword index");
    println!("keyword index: {} items at {}", disk.len(), kwix_path.display());
    for hit in disk.search("governor ohio", 3, None).hits {
        println!("  {}. {} ({})", hit.rank, hit.item.label, hit.item.iri);
    }

    // Properties: vector index, reusable only under the same provider.
    let provider = HashEmbedding::default();
    let properties =
        load_item_records(data.join("demo-properties.tsv"), ItemKind::Property, &prefixes)
            .expect("load properties");
    let vidx_path = out.join("properties.vidx");
    let index = VectorIndex::build(properties.records, &provider, 256).expect("build vector index");
    index.save(&vidx_path).expect("save vector index");
    let reopened = load_vector_index::<ItemRecord>(&vidx_path).expect("reopen vector index");
    println!(
        "vector index: {} items, provider {}, at {}",
        reopened.len(),
        reopened.provider_id(),
        vidx_path.display()
    );
    for hit in reopened.search("student of", &provider, 2, None).expect("search") {
        println!("  {:.3} {}", hit.similarity, hit.payload.label);
    }
}
