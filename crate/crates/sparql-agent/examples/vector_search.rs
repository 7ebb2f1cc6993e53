//! Embedding similarity search over a property vocabulary.
//!
//! The hash provider embeds offline and deterministically, which keeps
//! the example runnable anywhere; swap in an HTTP provider for real
//! semantic similarity. Search is exact cosine top-k over unit vectors.
//!
//!     cargo run --example vector_search

use sparql_agent::catalog::{ItemKind, ItemRecord};
use sparql_agent::vector::{HashEmbedding, VectorIndex};

fn property(iri: &str, label: &str, synonyms: &[&str], score: u32) -> ItemRecord {
    ItemRecord {
        iri: iri.to_string(),
        label: label.to_string(),
        score,
        synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
        infos: Vec::new(),
        kind: ItemKind::Property,
    }
}

fn main() {
    let provider = HashEmbedding::default();
    let properties = vec![
        property("http://example.org/p/educatedAt", "educated at", &["alma mater"], 200),
        property("http://example.org/p/employer", "employer", &["works for"], 300),
        property("http://example.org/p/birthPlace", "place of birth", &["born in"], 500),
        property("http://example.org/p/deathPlace", "place of death", &[], 400),
        property("http://example.org/p/spouse", "spouse", &["married to"], 100),
    ];
    let index = VectorIndex::build(properties, &provider, 256).expect("build index");

    for query in ["educated where", "birth place", "spouse of"] {
        let hits = index.search(query, &provider, 3, None).expect("search");
        println!("query {query:?}");
        for hit in hits {
            println!("  {:.3}  {}", hit.similarity, hit.payload.label);
        }
        println!();
    }
}
