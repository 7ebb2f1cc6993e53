//! A complete agent session replayed from a script, over the bundled
//! two-graph catalog.
//!
//! The scripted model walks the classic flow: search for conference
//! streams and linking properties, probe the data shape with a small
//! query, run the aggregate, and commit an answer. A fixture endpoint
//! serves canned results, so this runs offline; with a real model and
//! endpoint the same code drives live sessions.
//!
//!     cargo run --example scripted_session

use std::path::Path;

use sparql_agent::agent::{chat_client, run_session, SessionConfig, TraceEvent};
use sparql_agent::catalog::load_catalog;
use sparql_agent::testing::{ask_json, empty_select_json, select_json, FixtureEndpoint, FixtureRule};
use sparql_agent::toolbox::{Toolbox, ToolboxOptions};

fn dblp_rules() -> Vec<FixtureRule> {
    vec![
        FixtureRule::json("ASK {", &ask_json(true)),
        FixtureRule::json(
            "LIMIT 5",
            &select_json(
                &["p", "v"],
                &[
                    vec![
                        ("p", "uri", "https://dblp.org/rec/conf/nips/0001"),
                        ("v", "uri", "https://dblp.org/streams/conf/nips"),
                    ],
                    vec![
                        ("p", "uri", "https://dblp.org/rec/conf/icml/0002"),
                        ("v", "uri", "https://dblp.org/streams/conf/icml"),
                    ],
                ],
            ),
        ),
        FixtureRule::json(
            "GROUP BY ?author",
            &select_json(
                &["author", "papers"],
                &[vec![
                    ("author", "uri", "https://dblp.org/pid/56/953"),
                    ("papers", "literal", "42"),
                ]],
            ),
        ),
        FixtureRule::json("", &empty_select_json(&["x"])),
    ]
}

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let endpoint = FixtureEndpoint::start(dblp_rules());

    let mut catalog = load_catalog(data.join("catalog.toml")).expect("load catalog");
    catalog.set_endpoint("dblp", endpoint.url()).expect("set endpoint");
    let toolbox = Toolbox::from_catalog(&catalog, &ToolboxOptions::default()).expect("toolbox");

    let script = format!(
        "scripted:{}",
        data.join("scripts/dblp_top_conferences.json").display()
    );
    let chat = chat_client(None, Some(&script)).expect("chat client");

    let mut config = SessionConfig::new(
        "Who published the most papers at the top 5 conferences in deep learning?",
    );
    config.kg = Some("dblp".to_string());
    let result = run_session(&toolbox, chat.as_ref(), &config).expect("session");

    for event in &result.trace {
        match event {
            TraceEvent::Model { turn, text, calls } => {
                let names: Vec<&str> = calls.iter().map(|c| c.name.as_str()).collect();
                println!("turn {turn}: {text}");
                if !names.is_empty() {
                    println!("  calls: {}", names.join(", "));
                }
            }
            TraceEvent::FunctionResult { name, ok, rendered } => {
                let first = rendered.lines().next().unwrap_or("");
                println!("  {name} {}: {first}", if *ok { "ok" } else { "error" });
            }
            _ => {}
        }
    }

    println!();
    println!("outcome:  {}", result.outcome.as_str());
    println!("graph:    {}", result.kg.as_deref().unwrap_or("-"));
    println!("answer:   {}", result.answer.as_deref().unwrap_or("-"));
    println!("final SPARQL:\n{}", result.sparql.as_deref().unwrap_or("-"));
}
