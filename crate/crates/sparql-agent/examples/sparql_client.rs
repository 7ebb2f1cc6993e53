//! Query a SPARQL endpoint and render the result as bounded text.
//!
//! The endpoint here is an in-process fixture serving canned JSON, so
//! the example runs offline; point the client at any real endpoint URL
//! for live data. Tables longer or wider than ten show the first and
//! last five with an ellipsis, which is the exact text a model sees.
//!
//!     cargo run --example sparql_client

use sparql_agent::sparql::{render_table, SparqlClient};
use sparql_agent::testing::{select_json, FixtureEndpoint, FixtureRule};

fn main() {
    // Twelve bindings for ?city to exercise the truncation rule.
    let rows: Vec<Vec<(&str, &str, &str)>> = (0..12)
        .map(|i| {
            vec![
                ("city", "uri", CITY_IRIS[i]),
                ("population", "literal", POPULATIONS[i]),
            ]
        })
        .collect();
    let endpoint = FixtureEndpoint::start(vec![
        FixtureRule::json("?city", &select_json(&["city", "population"], &rows)),
    ]);

    let client = SparqlClient::new(endpoint.url());
    let table = client
        .execute("SELECT ?city ?population WHERE { ?city <http://example.org/pop> ?population }")
        .expect("query failed");

    println!("{}", render_table(&table));
    println!();
    println!(
        "(total {} rows; the renderer clipped the middle two)",
        table.total_rows
    );
}

const CITY_IRIS: [&str; 12] = [
    "http://example.org/city/tokyo",
    "http://example.org/city/delhi",
    "http://example.org/city/shanghai",
    "http://example.org/city/dhaka",
    "http://example.org/city/saopaulo",
    "http://example.org/city/cairo",
    "http://example.org/city/mexico",
    "http://example.org/city/beijing",
    "http://example.org/city/mumbai",
    "http://example.org/city/osaka",
    "http://example.org/city/chongqing",
    "http://example.org/city/karachi",
];

const POPULATIONS: [&str; 12] = [
    "37400068", "28514000", "25582000", "19578000", "21650000", "20076000",
    "21581000", "19618000", "19980000", "19281000", "14838000", "15400000",
];
