//! Call toolbox functions directly, outside any model session.
//!
//! The toolbox is the full function surface a model gets: search over
//! indexed entities and properties, triple listing, query execution,
//! and example retrieval. Each call returns the rendered text the
//! model would see.
//!
//!     cargo run --example toolbox_functions

use serde_json::json;
use sparql_agent::testing::{demo, FixtureEndpoint};
use sparql_agent::toolbox::FunctionCall;

fn main() {
    let endpoint = FixtureEndpoint::start(demo::endpoint_rules());
    let toolbox = demo::toolbox(endpoint.url());
    let mut rng = demo::rng();

    let calls = [
        FunctionCall::new("search_entity", json!({"kg": "test", "query": "douglas adams"})),
        FunctionCall::new("search_property", json!({"kg": "test", "query": "educated"})),
        FunctionCall::new(
            "execute",
            json!({
                "kg": "test",
                "sparql": "SELECT ?u WHERE { <http://www.wikidata.org/entity/Q42> <http://www.wikidata.org/prop/direct/P69> ?u }"
            }),
        ),
        FunctionCall::new(
            "find_similar_examples",
            json!({"kg": "test", "question": "Where did Douglas Adams study?"}),
        ),
    ];

    for call in calls {
        let result = toolbox.invoke(&call, &mut rng).expect("invoke");
        println!("== {} ==", call.name);
        println!("{}", result.rendered);
        println!();
    }
}
