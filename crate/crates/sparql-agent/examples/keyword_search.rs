//! Prefix-keyword search over a small actor corpus.
//!
//! Shows the scoring rule: per query token, 2 points for an exact token
//! match, 1 for a proper prefix, summed per alias; an item ranks by its
//! best alias and ties break on popularity.
//!
//!     cargo run --example keyword_search

use sparql_agent::catalog::{ItemKind, ItemRecord};
use sparql_agent::keyword::{KeywordIndex, KeywordSearch};

fn person(iri: &str, label: &str, score: u32) -> ItemRecord {
    ItemRecord {
        iri: iri.to_string(),
        label: label.to_string(),
        score,
        synonyms: Vec::new(),
        infos: Vec::new(),
        kind: ItemKind::Entity,
    }
}

fn main() {
    let index = KeywordIndex::build(vec![
        person("http://example.org/falk", "Peter Falk", 4000),
        person("http://example.org/alberto", "Carlos Alberto", 3000),
        person("http://example.org/einstein", "Albert Einstein", 9000),
        person("http://example.org/finney", "Albert Finney", 2000),
    ]);

    for query in ["Albert E", "albert", "Pet"] {
        let response = index.search(query, 10, None);
        println!("query {query:?}");
        for hit in &response.hits {
            println!(
                "  {}. {:<16} match {}  popularity {}",
                hit.rank, hit.item.label, hit.match_score, hit.item.score
            );
        }
        println!();
    }

    // "Albert E": Einstein scores 2+1 (exact "albert", "e" prefixes
    // "einstein"), Finney 2, Alberto 1 ("albert" prefixes "alberto"),
    // and Falk matches nothing, so he does not appear at all.
}
