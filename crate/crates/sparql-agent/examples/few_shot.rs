//! Few-shot priming: similar question-query pairs are injected into
//! the conversation before the first model turn.
//!
//! The demo graph ships a small example store. With few-shot on, the
//! controller retrieves the pairs most similar to the question (or a
//! seeded random draw) through a synthetic function exchange, so the
//! model sees worked SPARQL for related questions before it starts.
//!
//!     cargo run --example few_shot

use std::path::Path;

use sparql_agent::agent::{chat_client, run_session, FewShotMode, SessionConfig, TraceEvent};
use sparql_agent::catalog::load_catalog;
use sparql_agent::testing::{demo, FixtureEndpoint};
use sparql_agent::toolbox::{Toolbox, ToolboxOptions};

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let endpoint = FixtureEndpoint::start(demo::endpoint_rules());

    let mut catalog = load_catalog(data.join("catalog.toml")).expect("load catalog");
    catalog.set_endpoint("demo", endpoint.url()).expect("set endpoint");
    let toolbox = Toolbox::from_catalog(&catalog, &ToolboxOptions::default()).expect("toolbox");

    let script = format!("scripted:{}", data.join("scripts/few_shot_primed.json").display());
    let chat = chat_client(None, Some(&script)).expect("chat client");

    let mut config = SessionConfig::new("Where was Douglas Adams educated?");
    config.kg = Some("demo".to_string());
    config.few_shot = Some(FewShotMode::Similar);
    config.shots = 2;
    let result = run_session(&toolbox, chat.as_ref(), &config).expect("session");

    for event in &result.trace {
        if let TraceEvent::FewShot { name, kg, rendered } = event {
            println!("primed via {name} over graph {kg}:");
            println!("{rendered}");
            println!();
        }
    }

    println!("outcome: {}", result.outcome.as_str());
    println!("answer:  {}", result.answer.as_deref().unwrap_or("-"));
}
