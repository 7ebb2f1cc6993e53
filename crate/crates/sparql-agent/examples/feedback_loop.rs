//! Answer review: a first attempt is sent back for refinement before
//! the session commits.
//!
//! With feedback on, every answer or cancel triggers a fresh-context
//! review pass that judges the attempt done, refine, or retry. Here the
//! scripted reviewer rejects a query missing DISTINCT, the scripted
//! model resubmits with it, and the second review approves. Reviews are
//! capped at two per session so a harsh reviewer cannot loop forever.
//!
//!     cargo run --example feedback_loop

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

    let script = format!("scripted:{}", data.join("scripts/feedback_refine.json").display());
    let chat = chat_client(None, Some(&script)).expect("chat client");

    let mut config = SessionConfig::new("Where was Douglas Adams educated?");
    config.kg = Some("demo".to_string());
    config.feedback = true;
    let result = run_session(&toolbox, chat.as_ref(), &config).expect("session");

    for event in &result.trace {
        match event {
            TraceEvent::Model { turn, calls, .. } => {
                for call in calls {
                    let sparql = call.arguments["sparql"].as_str().unwrap_or("-");
                    println!("turn {turn}: {} with {sparql}", call.name);
                }
            }
            TraceEvent::Feedback { round, status, message } => {
                println!("review {round}: {status} {message}");
            }
            _ => {}
        }
    }

    println!();
    println!("outcome: {} after {} review rounds", result.outcome.as_str(), result.feedback_rounds);
    println!("committed query: {}", result.sparql.as_deref().unwrap_or("-"));
}
