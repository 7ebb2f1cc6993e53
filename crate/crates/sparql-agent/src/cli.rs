//! The command-line surface.
//!
//! Four subcommands: `index-build` persists the search indexes for one
//! graph, `ask` answers a single question, `bench` scores a dataset
//! sample, `report` summarizes one or two finished runs. Exit codes
//! are stable so scripts can branch on them:
//!
//! - 0: success (`ask`: the question was answered)
//! - 2: load or validation failure (catalog, data files, datasets)
//! - 3: configuration error (missing provider, model, or API key)
//! - 4: the model cancelled the question
//! - 5: the turn budget ran out
//! - 6: transport failure (chat endpoint or SPARQL endpoint)
//!
//! Endpoints can be overridden per graph with environment variables:
//! `SPARQL_AGENT_ENDPOINT_<NAME>` (graph name uppercased, with every
//! non-alphanumeric character as `_`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agent::{
    chat_client, run_session, ChatError, FewShotMode, FunctionSet, SessionConfig, SessionError,
    SessionOutcome, TraceEvent, DEFAULT_MAX_TURNS, DEFAULT_SHOTS,
};
use crate::catalog::{load_catalog, Catalog, ItemKind};
use crate::eval::{
    load_dataset, run_benchmark, summarize, BenchError, BenchOptions, BenchReport, SampleScore,
    DEFAULT_SAMPLE_COUNT,
};
use crate::keyword::{KeywordIndex, KeywordSearch};
use crate::sparql::render_table;
use crate::store::ExampleStore;
use crate::toolbox::{Toolbox, ToolboxError, ToolboxOptions};
use crate::vector::{provider_from_config, VectorIndex, DEFAULT_EMBED_BATCH};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_CANCELLED: i32 = 4;
pub const EXIT_EXHAUSTED: i32 = 5;
pub const EXIT_TRANSPORT: i32 = 6;

#[derive(Debug, Parser)]
#[command(
    name = "sparql-agent",
    version,
    about = "Answer natural-language questions over SPARQL knowledge graphs"
)]
pub struct Cli {
    /// Knowledge-graph catalog (TOML).
    #[arg(long, global = true, default_value = "catalog.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and persist the search indexes for one graph.
    IndexBuild {
        /// Graph name from the catalog.
        #[arg(long)]
        kg: String,
        #[arg(long, value_enum)]
        kind: IndexKind,
        /// Override the source data path from the catalog.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Override the output path (default: next to the source).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer one question and print the trace, query, and result.
    Ask {
        question: String,
        /// Restrict the session to one graph.
        #[arg(long)]
        kg: Option<String>,
        #[command(flatten)]
        session: SessionFlags,
    },
    /// Evaluate on a dataset sample and write scores and traces.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for scores, traces, and the report.
        #[arg(long)]
        out: PathBuf,
        /// Graph for dataset records that do not name one.
        #[arg(long)]
        kg: Option<String>,
        /// Samples to draw from the dataset.
        #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Ground-truth result cache directory (default: <out>/gt-cache).
        #[arg(long)]
        gt_cache: Option<PathBuf>,
        #[command(flatten)]
        session: SessionFlags,
    },
    /// Summarize a finished run directory; compare against a second.
    Report {
        dir: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SessionFlags {
    /// Function set offered to the model: b, s, se, sa, or sc.
    #[arg(long = "fn-set", default_value = "s", value_parser = parse_fn_set)]
    pub fn_set: FunctionSet,
    /// Review each answer in a separate exchange before accepting it.
    #[arg(long)]
    pub feedback: bool,
    /// Prime the conversation with worked examples.
    #[arg(long, value_parser = parse_few_shot)]
    pub few_shot: Option<FewShotMode>,
    /// Examples per graph in few-shot mode.
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    pub shots: usize,
    /// Reject queries that use IRIs no function result has mentioned.
    #[arg(long)]
    pub strict_iri_guard: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_TURNS)]
    pub max_turns: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Chat model override; "scripted:<path>" replays a script file.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexKind {
    Entity,
    Property,
    Examples,
}

fn parse_fn_set(s: &str) -> Result<FunctionSet, String> {
    FunctionSet::parse(s).ok_or_else(|| "expected one of: b, s, se, sa, sc".to_string())
}

fn parse_few_shot(s: &str) -> Result<FewShotMode, String> {
    FewShotMode::parse(s).ok_or_else(|| "expected similar or random".to_string())
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<ChatError> for CliError {
    fn from(e: ChatError) -> Self {
        let code = match &e {
            ChatError::MissingApiKey(_) | ChatError::Config(_) => EXIT_CONFIG,
            ChatError::Script { .. } => EXIT_DATA,
            _ => EXIT_TRANSPORT,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ToolboxError> for CliError {
    fn from(e: ToolboxError) -> Self {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

/// Run a parsed invocation and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::IndexBuild {
            kg,
            kind,
            source,
            out,
        } => cmd_index_build(&cli.config, &kg, kind, source, out),
        Command::Ask {
            question,
            kg,
            session,
        } => cmd_ask(&cli.config, &question, kg, &session),
        Command::Bench {
            dataset,
            out,
            kg,
            n,
            parallelism,
            gt_cache,
            session,
        } => cmd_bench(
            &cli.config,
            &dataset,
            &out,
            kg.as_deref(),
            n,
            parallelism,
            gt_cache,
            &session,
        ),
        Command::Report { dir, compare } => cmd_report(&dir, compare.as_deref()),
    }
}

fn load_catalog_checked(path: &Path) -> Result<Catalog, CliError> {
    let mut catalog =
        load_catalog(path).map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
    let names: Vec<String> = catalog.graphs().map(|g| g.name.clone()).collect();
    for name in names {
        let var: String = format!("SPARQL_AGENT_ENDPOINT_{}", name.to_uppercase())
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        if let Ok(endpoint) = std::env::var(&var) {
            catalog
                .set_endpoint(&name, &endpoint)
                .expect("graph just listed");
        }
    }
    Ok(catalog)
}

fn open_toolbox(catalog: &Catalog) -> Result<Toolbox, CliError> {
    Toolbox::from_catalog(catalog, &ToolboxOptions::default()).map_err(CliError::from)
}

fn cmd_index_build(
    config: &Path,
    kg: &str,
    kind: IndexKind,
    source: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<i32, CliError> {
    let catalog = load_catalog_checked(config)?;
    let graph = catalog.lookup(kg).ok_or_else(|| {
        CliError::new(
            EXIT_CONFIG,
            format!("knowledge graph {kg:?} is not in {}", config.display()),
        )
    })?;

    let catalog_source = match kind {
        IndexKind::Entity => &graph.entity_data_path,
        IndexKind::Property => &graph.property_data_path,
        IndexKind::Examples => &graph.example_store_path,
    };
    let source = source.or_else(|| catalog_source.clone()).ok_or_else(|| {
        CliError::new(
            EXIT_CONFIG,
            format!("no source configured for the {kg} {} data", kind_name(kind)),
        )
    })?;

    if kind != IndexKind::Entity && catalog.embeddings.is_none() {
        return Err(CliError::new(
            EXIT_CONFIG,
            "no embedding provider configured; add an [embeddings] section to the catalog",
        ));
    }

    let started = Instant::now();
    let (count, out_path) = match kind {
        IndexKind::Entity => {
            let file = crate::catalog::load_item_records(
                &source,
                ItemKind::Entity,
                &graph.prefixes,
            )
            .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            let index = KeywordIndex::build(file.records);
            let out = out.unwrap_or_else(|| {
                crate::diskfmt::sibling_path(&source, crate::toolbox::KEYWORD_INDEX_SUFFIX)
            });
            index
                .save(&out)
                .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            (index.len(), out)
        }
        IndexKind::Property => {
            let provider = provider_from_config(catalog.embeddings.as_ref())
                .map_err(|e| CliError::new(EXIT_CONFIG, e))?;
            let file = crate::catalog::load_item_records(
                &source,
                ItemKind::Property,
                &graph.prefixes,
            )
            .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            let index =
                VectorIndex::build(file.records, provider.as_ref(), DEFAULT_EMBED_BATCH)
                    .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            let out = out.unwrap_or_else(|| {
                crate::diskfmt::sibling_path(&source, crate::toolbox::VECTOR_INDEX_SUFFIX)
            });
            index
                .save(&out)
                .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            (index.len(), out)
        }
        IndexKind::Examples => {
            if out.is_some() {
                return Err(CliError::new(
                    EXIT_CONFIG,
                    "example indexes are always written next to their source; drop --out",
                ));
            }
            let provider = provider_from_config(catalog.embeddings.as_ref())
                .map_err(|e| CliError::new(EXIT_CONFIG, e))?;
            let store = ExampleStore::open(&source, kg, provider.as_ref())
                .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            store
                .save_index(&source)
                .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
            (
                store.len(),
                crate::diskfmt::sibling_path(&source, crate::toolbox::VECTOR_INDEX_SUFFIX),
            )
        }
    };
    println!(
        "built {} index for {kg}: {count} items in {} ms -> {}",
        kind_name(kind),
        started.elapsed().as_millis(),
        out_path.display()
    );
    Ok(EXIT_OK)
}

fn kind_name(kind: IndexKind) -> &'static str {
    match kind {
        IndexKind::Entity => "entity",
        IndexKind::Property => "property",
        IndexKind::Examples => "examples",
    }
}

fn session_error(e: SessionError) -> CliError {
    match e {
        SessionError::Chat(e) => e.into(),
        SessionError::Toolbox(e) => e.into(),
    }
}

fn cmd_ask(
    config: &Path,
    question: &str,
    kg: Option<String>,
    flags: &SessionFlags,
) -> Result<i32, CliError> {
    let catalog = load_catalog_checked(config)?;
    let toolbox = open_toolbox(&catalog)?;
    if let Some(kg) = &kg {
        if toolbox.graph(kg).is_none() {
            return Err(CliError::new(
                EXIT_CONFIG,
                format!("knowledge graph {kg:?} is not in the catalog"),
            ));
        }
    }
    let chat = chat_client(catalog.chat.as_ref(), flags.model.as_deref())?;

    let mut session = SessionConfig::new(question);
    session.kg = kg;
    session.function_set = flags.fn_set;
    session.feedback = flags.feedback;
    session.few_shot = flags.few_shot;
    session.shots = flags.shots;
    session.strict_iri_guard = flags.strict_iri_guard;
    session.max_turns = flags.max_turns;
    session.seed = flags.seed;

    let result = run_session(&toolbox, chat.as_ref(), &session).map_err(session_error)?;

    print_trace_summary(&result.trace);
    println!();
    match (&result.sparql, &result.kg) {
        (Some(sparql), Some(kg)) => {
            println!("kg: {kg}");
            println!("sparql:\n{sparql}");
            let graph = toolbox.graph(kg);
            match graph.map(|g| g.client.execute(sparql)) {
                Some(Ok(table)) => println!("result:\n{}", render_table(&table)),
                Some(Err(e)) => println!("result: query failed: {e}"),
                None => println!("result: unknown knowledge graph {kg:?}"),
            }
        }
        _ => println!("no final query"),
    }
    if let Some(answer) = &result.answer {
        println!("answer: {answer}");
    }
    println!(
        "outcome: {} ({} turns, {} function calls)",
        result.outcome.as_str(),
        result.turns,
        result.function_calls
    );
    Ok(match result.outcome {
        SessionOutcome::Answered => EXIT_OK,
        SessionOutcome::Cancelled => EXIT_CANCELLED,
        SessionOutcome::Exhausted => EXIT_EXHAUSTED,
    })
}

fn print_trace_summary(trace: &[TraceEvent]) {
    let first_line = |s: &str| {
        let line = s.lines().next().unwrap_or("").trim();
        if line.chars().count() > 100 {
            format!("{}...", line.chars().take(97).collect::<String>())
        } else {
            line.to_string()
        }
    };
    for event in trace {
        match event {
            TraceEvent::Instruction { .. } | TraceEvent::Task { .. } => {}
            TraceEvent::FewShot { name, kg, .. } => {
                println!("primed  {name}({kg})");
            }
            TraceEvent::Model { turn, text, calls } => {
                let what = if calls.is_empty() {
                    "text only".to_string()
                } else {
                    calls
                        .iter()
                        .map(|c| c.name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                println!("turn {turn:>2}  {what}");
                if !text.trim().is_empty() {
                    println!("        | {}", first_line(text));
                }
            }
            TraceEvent::FunctionResult { name, ok, rendered } => {
                let status = if *ok { "ok" } else { "error" };
                println!("        {name} {status}: {}", first_line(rendered));
            }
            TraceEvent::Feedback {
                round,
                status,
                message,
            } => {
                println!("review {round}: {status} {}", first_line(message));
            }
            TraceEvent::Outcome { .. } => {}
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    config: &Path,
    dataset: &Path,
    out: &Path,
    kg: Option<&str>,
    n: usize,
    parallelism: usize,
    gt_cache: Option<PathBuf>,
    flags: &SessionFlags,
) -> Result<i32, CliError> {
    let catalog = load_catalog_checked(config)?;
    let toolbox = open_toolbox(&catalog)?;
    let chat = chat_client(catalog.chat.as_ref(), flags.model.as_deref())?;
    let samples =
        load_dataset(dataset, kg).map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;

    let options = BenchOptions {
        n,
        seed: flags.seed,
        parallelism,
        function_set: flags.fn_set,
        feedback: flags.feedback,
        few_shot: flags.few_shot,
        shots: flags.shots,
        strict_iri_guard: flags.strict_iri_guard,
        max_turns: flags.max_turns,
        gt_cache,
    };
    let report = run_benchmark(&toolbox, chat.as_ref(), &samples, &options, out).map_err(
        |e| match e {
            BenchError::Endpoint { .. } => CliError::new(EXIT_TRANSPORT, e.to_string()),
            BenchError::UnknownGraph { .. } | BenchError::Io { .. } => {
                CliError::new(EXIT_DATA, e.to_string())
            }
        },
    )?;
    print_report(&report);
    println!("report: {}", out.join("report.json").display());
    Ok(EXIT_OK)
}

fn print_report(report: &BenchReport) {
    println!(
        "samples: {}   scored: {}   mean F1: {:.4}",
        report.samples, report.scored, report.mean_f1
    );
    let c = &report.counters;
    println!(
        "answered {}   cancelled {}   exhausted {}   error {}   excluded {} (invalid gt {})",
        c.answered, c.cancelled, c.exhausted, c.error, c.excluded, c.invalid_gt
    );
}

fn read_scores(dir: &Path) -> Result<Vec<SampleScore>, CliError> {
    let path = dir.join("scores.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::new(EXIT_DATA, format!("no traces found in {}", dir.display()))
    })?;
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        scores.push(serde_json::from_str(line).map_err(|e| {
            CliError::new(
                EXIT_DATA,
                format!("{}:{}: bad score record: {e}", path.display(), i + 1),
            )
        })?);
    }
    if scores.is_empty() {
        return Err(CliError::new(
            EXIT_DATA,
            format!("no traces found in {}", dir.display()),
        ));
    }
    Ok(scores)
}

fn run_model(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("config.json"))
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
        .and_then(|v| v["model"].as_str().map(String::from))
        .unwrap_or_else(|| "unknown".to_string())
}

/// Function-name counts across every trace in the run.
fn call_histogram(dir: &Path) -> Result<BTreeMap<String, usize>, CliError> {
    let traces = dir.join("traces");
    let mut counts = BTreeMap::new();
    let entries = match std::fs::read_dir(&traces) {
        Ok(entries) => entries,
        Err(_) => return Ok(counts),
    };
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::new(EXIT_DATA, format!("unreadable trace: {e}")))?
            .path();
        if path.extension().map_or(true, |e| e != "jsonl") {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::new(EXIT_DATA, format!("unreadable trace {}: {e}", path.display()))
        })?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let event: TraceEvent = serde_json::from_str(line).map_err(|e| {
                CliError::new(EXIT_DATA, format!("bad trace line in {}: {e}", path.display()))
            })?;
            if let TraceEvent::Model { calls, .. } = event {
                for call in calls {
                    *counts.entry(call.name).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(counts)
}

fn cmd_report(dir: &Path, compare: Option<&Path>) -> Result<i32, CliError> {
    let scores = read_scores(dir)?;
    let report = summarize(&scores, &run_model(dir), 0);

    println!("run: {} (model {})", dir.display(), report.model_id);
    println!();
    println!(
        "{:<16} {:>8} {:>8} {:>9} {:>5} {:>5} {:>5} {:>5} {:>5}",
        "kg", "samples", "scored", "mean F1", "ans", "can", "exh", "err", "exc"
    );
    for (kg, summary) in &report.per_kg {
        let rows = scores.iter().filter(|s| &s.kg == kg);
        let count = |f: &dyn Fn(&&SampleScore) -> bool| rows.clone().filter(f).count();
        use crate::eval::RunOutcome::*;
        println!(
            "{:<16} {:>8} {:>8} {:>9.4} {:>5} {:>5} {:>5} {:>5} {:>5}",
            kg,
            summary.samples,
            summary.scored,
            summary.mean_f1,
            count(&|s| s.outcome == Answered),
            count(&|s| s.outcome == Cancelled),
            count(&|s| s.outcome == Exhausted),
            count(&|s| s.outcome == Error),
            summary.samples - summary.scored,
        );
    }
    let c = &report.counters;
    println!(
        "{:<16} {:>8} {:>8} {:>9.4} {:>5} {:>5} {:>5} {:>5} {:>5}",
        "overall",
        report.samples,
        report.scored,
        report.mean_f1,
        c.answered,
        c.cancelled,
        c.exhausted,
        c.error,
        c.excluded,
    );
    println!(
        "avg turns {:.1}   avg function calls {:.1}",
        report.avg_turns, report.avg_function_calls
    );

    let histogram = call_histogram(dir)?;
    if !histogram.is_empty() {
        println!();
        println!("function calls:");
        for (name, count) in &histogram {
            println!("  {name:<28} {count:>6}");
        }
    }

    if let Some(other_dir) = compare {
        let other_scores = read_scores(other_dir)?;
        let other = summarize(&other_scores, &run_model(other_dir), 0);
        println!();
        println!("compare: {} (model {})", other_dir.display(), other.model_id);
        println!(
            "{:<16} {:>9} {:>9} {:>9}",
            "kg", "mean F1 A", "mean F1 B", "delta"
        );
        let mut kgs: Vec<&String> = report.per_kg.keys().collect();
        for kg in other.per_kg.keys() {
            if !report.per_kg.contains_key(kg) {
                kgs.push(kg);
            }
        }
        for kg in kgs {
            let a = report.per_kg.get(kg).map(|s| s.mean_f1);
            let b = other.per_kg.get(kg).map(|s| s.mean_f1);
            println!(
                "{:<16} {:>9} {:>9} {:>9}",
                kg,
                a.map_or("-".to_string(), |v| format!("{v:.4}")),
                b.map_or("-".to_string(), |v| format!("{v:.4}")),
                match (a, b) {
                    (Some(a), Some(b)) => format!("{:+.4}", b - a),
                    _ => "-".to_string(),
                }
            );
        }
        println!(
            "{:<16} {:>9.4} {:>9.4} {:>+9.4}",
            "overall",
            report.mean_f1,
            other.mean_f1,
            other.mean_f1 - report.mean_f1
        );
    }
    Ok(EXIT_OK)
}
