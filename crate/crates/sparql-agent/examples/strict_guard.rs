//! The strict IRI guard: queries may only use identifiers the session
//! has actually seen.
//!
//! Models hallucinate plausible-looking entity and property ids. With
//! the guard on, an execute or answer whose query mentions an IRI that
//! never appeared in any function result is rejected before it reaches
//! the endpoint, with a message naming the offenders. The scripted
//! model here guesses an id, gets rejected, searches properly, and
//! succeeds.
//!
//!     cargo run --example strict_guard

use std::path::Path;

use sparql_agent::agent::{chat_client, run_session, SessionConfig, TraceEvent};
use sparql_agent::catalog::load_catalog;
use sparql_agent::testing::{demo, FixtureEndpoint};
use sparql_agent::toolbox::{Toolbox, ToolboxOptions};

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let endpoint = FixtureEndpoint::start(demo::endpoint_rules());

    let mut catalog = load_catalog(data.join("catalog.toml")).expect("load catalog");
    catalog.set_endpoint("demo", endpoint.url()).expect("set endpoint");
    let toolbox = Toolbox::from_catalog(&catalog, &ToolboxOptions::default()).expect("toolbox");

    let script = format!("scripted:{}", data.join("scripts/guard_invented_iri.json").display());
    let chat = chat_client(None, Some(&script)).expect("chat client");

    let mut config = SessionConfig::new("Where was Douglas Adams educated?");
    config.kg = Some("demo".to_string());
    config.strict_iri_guard = true;
    let result = run_session(&toolbox, chat.as_ref(), &config).expect("session");

    for event in &result.trace {
        if let TraceEvent::FunctionResult { name, ok, rendered } = event {
            let first = rendered.lines().next().unwrap_or("");
            println!("{name} {}: {first}", if *ok { "ok" } else { "rejected" });
        }
    }

    println!();
    println!("outcome: {}", result.outcome.as_str());
    println!("committed query: {}", result.sparql.as_deref().unwrap_or("-"));
    println!();
    println!(
        "(the first execute was blocked client-side; the endpoint saw {} requests)",
        endpoint.request_count()
    );
}
