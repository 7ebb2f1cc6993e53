//! Run the bundled benchmark dataset end to end and print the report.
//!
//! Six questions over the demo graph, answered by a scripted model
//! against a fixture endpoint: three answered correctly, one answered
//! wrongly, one cancelled, and one whose ground truth returns no rows
//! and is excluded from scoring. Artifacts (config, per-sample scores,
//! session traces, report) land in a scratch directory; the same seed
//! and inputs always produce byte-identical score files.
//!
//!     cargo run --example benchmark_run

use std::path::Path;

use sparql_agent::agent::chat_client;
use sparql_agent::catalog::load_catalog;
use sparql_agent::eval::{load_dataset, run_benchmark, BenchOptions};
use sparql_agent::testing::{demo, FixtureEndpoint};
use sparql_agent::toolbox::{Toolbox, ToolboxOptions};

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let endpoint = FixtureEndpoint::start(demo::endpoint_rules());

    let mut catalog = load_catalog(data.join("catalog.toml")).expect("load catalog");
    catalog.set_endpoint("demo", endpoint.url()).expect("set endpoint");
    let toolbox = Toolbox::from_catalog(&catalog, &ToolboxOptions::default()).expect("toolbox");

    let script = format!("scripted:{}", data.join("scripts/bench_demo.json").display());
    let chat = chat_client(None, Some(&script)).expect("chat client");

    let samples = load_dataset(data.join("dataset.jsonl"), None).expect("load dataset");
    let out = std::env::temp_dir().join(format!("bench-demo-{}", std::process::id()));

    let options = BenchOptions::default();
    let report =
        run_benchmark(&toolbox, chat.as_ref(), &samples, &options, &out).expect("benchmark");

    println!("samples:   {}", report.samples);
    println!("scored:    {}  (excluded {})", report.scored, report.counters.excluded);
    println!("mean F1:   {:.4}", report.mean_f1);
    println!(
        "outcomes:  {} answered, {} cancelled, {} exhausted, {} errors",
        report.counters.answered,
        report.counters.cancelled,
        report.counters.exhausted,
        report.counters.error
    );
    println!("avg turns: {:.2}", report.avg_turns);
    for (kg, summary) in &report.per_kg {
        println!(
            "  {kg}: {} samples, {} scored, mean F1 {:.4}",
            summary.samples, summary.scored, summary.mean_f1
        );
    }
    println!();
    println!("artifacts in {}", out.display());
    for name in ["config.json", "scores.jsonl", "report.json", "traces"] {
        println!("  {name}");
    }
}
