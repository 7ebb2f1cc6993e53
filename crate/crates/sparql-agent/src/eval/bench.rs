//! Seeded benchmark runs.
//!
//! A run draws a uniform sample of the dataset, answers each question
//! in its own session, scores the committed query against the executed
//! ground truth, and persists everything under one output directory:
//!
//! ```text
//! out/
//!   config.json     settings snapshot + sampled ids
//!   scores.jsonl    one score record per sample, in dataset order
//!   traces/<id>.jsonl
//!   report.json     aggregates (includes wall-clock times)
//!   gt-cache/       ground-truth result cache (unless redirected)
//! ```
//!
//! Every byte of scores.jsonl is deterministic for a fixed seed,
//! dataset, and scripted model, whatever the parallelism; timing lives
//! only in report.json.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{
    run_session, ChatClient, FewShotMode, FunctionSet, SessionConfig, SessionOutcome, TraceEvent,
    DEFAULT_FEEDBACK_ROUNDS, DEFAULT_MAX_TURNS, DEFAULT_SHOTS,
};
use crate::eval::cache::GtCache;
use crate::eval::dataset::BenchmarkSample;
use crate::eval::metric::{score_results, EvalScore, ScorePath};
use crate::toolbox::Toolbox;

pub const LAYOUT_VERSION: u32 = 1;
pub const DEFAULT_SAMPLE_COUNT: usize = 200;
const PROBE_QUERY: &str = "ASK { }";

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Upper bound on evaluated samples; the whole dataset when larger.
    pub n: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub function_set: FunctionSet,
    pub feedback: bool,
    pub few_shot: Option<FewShotMode>,
    pub shots: usize,
    pub strict_iri_guard: bool,
    pub max_turns: usize,
    /// Ground-truth cache directory; `<out>/gt-cache` when unset.
    pub gt_cache: Option<PathBuf>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            n: DEFAULT_SAMPLE_COUNT,
            seed: 0,
            parallelism: 1,
            function_set: FunctionSet::S,
            feedback: false,
            few_shot: None,
            shots: DEFAULT_SHOTS,
            strict_iri_guard: false,
            max_turns: DEFAULT_MAX_TURNS,
            gt_cache: None,
        }
    }
}

/// How a sample's session ended; `Error` covers session-level failures
/// (transport, missing resources).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunOutcome {
    Answered,
    Cancelled,
    Exhausted,
    Error,
}

impl From<SessionOutcome> for RunOutcome {
    fn from(outcome: SessionOutcome) -> Self {
        match outcome {
            SessionOutcome::Answered => RunOutcome::Answered,
            SessionOutcome::Cancelled => RunOutcome::Cancelled,
            SessionOutcome::Exhausted => RunOutcome::Exhausted,
        }
    }
}

/// One line of scores.jsonl.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub kg: String,
    pub outcome: RunOutcome,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub path: ScorePath,
    /// The ground-truth query itself failed; always excluded.
    pub invalid_gt: bool,
    pub turns: usize,
    pub function_calls: usize,
    pub feedback_rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Counters {
    pub answered: usize,
    pub cancelled: usize,
    pub exhausted: usize,
    pub error: usize,
    pub excluded: usize,
    pub invalid_gt: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KgSummary {
    pub samples: usize,
    pub scored: usize,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: u32,
    pub model_id: String,
    /// Samples evaluated.
    pub samples: usize,
    /// Samples contributing to the mean (not excluded).
    pub scored: usize,
    pub mean_f1: f64,
    pub counters: Counters,
    pub avg_turns: f64,
    pub avg_function_calls: f64,
    pub runtime_ms: u128,
    pub per_kg: BTreeMap<String, KgSummary>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("dataset names knowledge graph {kg:?} but the catalog does not")]
    UnknownGraph { kg: String },
    #[error("endpoint {endpoint} for {kg} is unreachable: {problem}")]
    Endpoint {
        kg: String,
        endpoint: String,
        problem: String,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Mix the run seed with the sample id (FNV-1a) so each session has
/// its own stable stream.
fn per_sample_seed(seed: u64, id: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    h = h.wrapping_mul(0x1_0000_0000_01b3);
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h
}

fn trace_file_name(id: &str) -> String {
    let sanitized: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if sanitized == id {
        format!("{sanitized}.jsonl")
    } else {
        // Sanitizing can merge distinct ids; a digest keeps them apart.
        let digest = Sha256::digest(id.as_bytes());
        format!("{sanitized}-{:02x}{:02x}{:02x}{:02x}.jsonl", digest[0], digest[1], digest[2], digest[3])
    }
}

/// Run the benchmark and write all artifacts under `out_dir`.
pub fn run_benchmark(
    toolbox: &Toolbox,
    chat: &dyn ChatClient,
    samples: &[BenchmarkSample],
    options: &BenchOptions,
    out_dir: &Path,
) -> Result<BenchReport, BenchError> {
    let started = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let count = options.n.min(samples.len());
    let mut picked: Vec<usize> =
        rand::seq::index::sample(&mut rng, samples.len(), count).into_vec();
    picked.sort_unstable();

    // Fail fast on configuration problems before burning model calls.
    let mut probed = BTreeMap::new();
    for &i in &picked {
        let kg = &samples[i].kg;
        if probed.contains_key(kg) {
            continue;
        }
        let graph = toolbox
            .graph(kg)
            .ok_or_else(|| BenchError::UnknownGraph { kg: kg.clone() })?;
        graph
            .client
            .execute(PROBE_QUERY)
            .map_err(|e| BenchError::Endpoint {
                kg: kg.clone(),
                endpoint: graph.config.endpoint.clone(),
                problem: e.to_string(),
            })?;
        probed.insert(kg.clone(), ());
    }

    let cache = GtCache::new(
        options
            .gt_cache
            .clone()
            .unwrap_or_else(|| out_dir.join("gt-cache")),
    );

    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<(usize, SampleScore, Vec<TraceEvent>)>> =
        Mutex::new(Vec::with_capacity(picked.len()));
    let workers = options.parallelism.max(1).min(picked.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let pos = next.fetch_add(1, Ordering::Relaxed);
                let Some(&sample_index) = picked.get(pos) else {
                    break;
                };
                let sample = &samples[sample_index];
                let (score, trace) = run_one(toolbox, chat, sample, options, &cache);
                collected.lock().unwrap().push((pos, score, trace));
            });
        }
    });

    let mut results = collected.into_inner().unwrap();
    results.sort_by_key(|(pos, _, _)| *pos);
    let scores: Vec<SampleScore> = results.iter().map(|(_, s, _)| s.clone()).collect();

    write_run_artifacts(out_dir, samples, &picked, options, chat.model_id(), &results)?;

    let report = summarize(&scores, chat.model_id(), started.elapsed().as_millis());
    let report_path = out_dir.join("report.json");
    write_text(
        &report_path,
        &format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")),
    )?;
    Ok(report)
}

fn run_one(
    toolbox: &Toolbox,
    chat: &dyn ChatClient,
    sample: &BenchmarkSample,
    options: &BenchOptions,
    cache: &GtCache,
) -> (SampleScore, Vec<TraceEvent>) {
    let mut config = SessionConfig::new(sample.question.clone());
    config.kg = Some(sample.kg.clone());
    config.function_set = options.function_set;
    config.few_shot = options.few_shot;
    config.shots = options.shots;
    config.feedback = options.feedback;
    config.strict_iri_guard = options.strict_iri_guard;
    config.max_turns = options.max_turns;
    config.max_feedback_rounds = DEFAULT_FEEDBACK_ROUNDS;
    config.seed = per_sample_seed(options.seed, &sample.id);

    let blank = |outcome: RunOutcome, score: EvalScore, invalid_gt: bool| SampleScore {
        id: sample.id.clone(),
        kg: sample.kg.clone(),
        outcome,
        precision: score.precision,
        recall: score.recall,
        f1: score.f1,
        path: score.path,
        invalid_gt,
        turns: 0,
        function_calls: 0,
        feedback_rounds: 0,
        notes: score.notes,
    };

    match run_session(toolbox, chat, &config) {
        Err(e) => (
            blank(RunOutcome::Error, EvalScore::error(e.to_string()), false),
            Vec::new(),
        ),
        Ok(result) => {
            let (score, invalid_gt) = score_prediction(
                toolbox,
                sample,
                result
                    .sparql
                    .as_deref()
                    .zip(result.kg.as_deref()),
                cache,
            );
            let mut record = blank(result.outcome.into(), score, invalid_gt);
            record.turns = result.turns;
            record.function_calls = result.function_calls;
            record.feedback_rounds = result.feedback_rounds;
            (record, result.trace)
        }
    }
}

/// Execute ground truth (through the cache) and the prediction, then
/// score. The bool is the invalid-ground-truth flag.
fn score_prediction(
    toolbox: &Toolbox,
    sample: &BenchmarkSample,
    predicted: Option<(&str, &str)>,
    cache: &GtCache,
) -> (EvalScore, bool) {
    let gt_graph = toolbox.graph(&sample.kg).expect("graph checked before run");
    let gt = match cache.fetch(&gt_graph.client, &sample.sparql) {
        Err(e) => {
            return (
                EvalScore::excluded(format!("ground truth failed: {e}")),
                true,
            )
        }
        Ok(table) => table,
    };
    if gt.is_ask.is_none() && gt.total_rows == 0 {
        return (EvalScore::excluded("ground truth returned no rows"), false);
    }
    let Some((sparql, kg)) = predicted else {
        return (EvalScore::error("no predicted query"), false);
    };
    let Some(graph) = toolbox.graph(kg) else {
        return (
            EvalScore::error(format!("predicted query names unknown graph {kg:?}")),
            false,
        );
    };
    match graph.client.execute(sparql) {
        Err(e) => (EvalScore::error(format!("predicted query failed: {e}")), false),
        Ok(pred) => (score_results(&gt, &pred), false),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), BenchError> {
    std::fs::write(path, text).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_run_artifacts(
    out_dir: &Path,
    samples: &[BenchmarkSample],
    picked: &[usize],
    options: &BenchOptions,
    model_id: &str,
    results: &[(usize, SampleScore, Vec<TraceEvent>)],
) -> Result<(), BenchError> {
    let traces_dir = out_dir.join("traces");
    std::fs::create_dir_all(&traces_dir).map_err(|source| BenchError::Io {
        path: traces_dir.clone(),
        source,
    })?;

    let config = serde_json::json!({
        "version": LAYOUT_VERSION,
        "model": model_id,
        "n": options.n,
        "seed": options.seed,
        "parallelism": options.parallelism,
        "function_set": options.function_set.as_str(),
        "feedback": options.feedback,
        "few_shot": options.few_shot,
        "shots": options.shots,
        "strict_iri_guard": options.strict_iri_guard,
        "max_turns": options.max_turns,
        "dataset_records": samples.len(),
        "sampled_ids": picked.iter().map(|&i| samples[i].id.as_str()).collect::<Vec<_>>(),
    });
    write_text(
        &out_dir.join("config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&config).expect("config serializes")),
    )?;

    let mut lines = String::new();
    for (_, score, _) in results {
        lines.push_str(&serde_json::to_string(score).expect("score serializes"));
        lines.push('\n');
    }
    write_text(&out_dir.join("scores.jsonl"), &lines)?;

    for (_, score, trace) in results {
        let mut body = String::new();
        for event in trace {
            body.push_str(&serde_json::to_string(event).expect("event serializes"));
            body.push('\n');
        }
        write_text(&traces_dir.join(trace_file_name(&score.id)), &body)?;
    }
    Ok(())
}

/// Aggregate score records into a report. Also used by the report
/// subcommand on previously written runs.
pub fn summarize(scores: &[SampleScore], model_id: &str, runtime_ms: u128) -> BenchReport {
    let mut counters = Counters::default();
    let mut per_kg: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    let mut f1_sum = 0.0;
    let mut scored = 0usize;
    let mut turns_sum = 0usize;
    let mut calls_sum = 0usize;
    for score in scores {
        match score.outcome {
            RunOutcome::Answered => counters.answered += 1,
            RunOutcome::Cancelled => counters.cancelled += 1,
            RunOutcome::Exhausted => counters.exhausted += 1,
            RunOutcome::Error => counters.error += 1,
        }
        turns_sum += score.turns;
        calls_sum += score.function_calls;
        let entry = per_kg.entry(score.kg.clone()).or_insert((0, 0, 0.0));
        entry.0 += 1;
        if score.path == ScorePath::Excluded {
            counters.excluded += 1;
            if score.invalid_gt {
                counters.invalid_gt += 1;
            }
        } else {
            scored += 1;
            f1_sum += score.f1;
            entry.1 += 1;
            entry.2 += score.f1;
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    BenchReport {
        version: LAYOUT_VERSION,
        model_id: model_id.to_string(),
        samples: scores.len(),
        scored,
        mean_f1: mean(f1_sum, scored),
        counters,
        avg_turns: mean(turns_sum as f64, scores.len()),
        avg_function_calls: mean(calls_sum as f64, scores.len()),
        runtime_ms,
        per_kg: per_kg
            .into_iter()
            .map(|(kg, (samples, scored, f1))| {
                (
                    kg,
                    KgSummary {
                        samples,
                        scored,
                        mean_f1: mean(f1, scored),
                    },
                )
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::chat::ScriptedChat;
    use crate::testing::{demo, select_json, FixtureEndpoint, FixtureRule};

    const WD: &str = "http://www.wikidata.org/entity/";

    fn sample(id: &str, question: &str, sparql: &str) -> BenchmarkSample {
        BenchmarkSample {
            id: id.to_string(),
            question: question.to_string(),
            sparql: sparql.to_string(),
            kg: "test".to_string(),
            split: None,
        }
    }

    fn answer_script(sparql: &str) -> String {
        format!(
            r#"[{{"text": "", "calls": [{{"name": "answer", "arguments":
                {{"kg": "test", "sparql": {sparql:?}, "answer": "done"}}}}]}}]"#
        )
    }

    /// Three questions: one answered correctly, one answered with a
    /// disjoint result, one cancelled outright. Hand-scored mean F1
    /// over the three: (1 + 0 + 0) / 3.
    fn three_question_setup() -> (FixtureEndpoint, Vec<BenchmarkSample>, ScriptedChat) {
        let q42 = select_json(&["x"], &[vec![("x", "uri", &format!("{WD}Q42"))]]);
        let q5 = select_json(&["x"], &[vec![("x", "uri", &format!("{WD}Q5"))]]);
        let fixture = FixtureEndpoint::start(vec![
            FixtureRule::json("\"gt-one\"", &q42),
            FixtureRule::json("\"gt-two\"", &q42),
            FixtureRule::json("\"pred-one\"", &q42),
            FixtureRule::json("\"pred-two\"", &q5),
            FixtureRule::json("", &select_json(&["x"], &[])),
        ]);
        let samples = vec![
            sample("s1", "q one", "SELECT ?x WHERE { ?x ?p \"gt-one\" }"),
            sample("s2", "q two", "SELECT ?x WHERE { ?x ?p \"gt-two\" }"),
            sample("s3", "q three", "SELECT ?x WHERE { ?x ?p \"gt-one\" }"),
        ];
        let script = format!(
            r#"{{
                "default": [],
                "by_question": {{
                    "q one": {},
                    "q two": {},
                    "q three": [{{"calls": [{{"name": "cancel",
                        "arguments": {{"explanation": "cannot tell"}}}}]}}]
                }}
            }}"#,
            answer_script("SELECT ?x WHERE { ?x ?p \"pred-one\" }"),
            answer_script("SELECT ?x WHERE { ?x ?p \"pred-two\" }"),
        );
        let chat = ScriptedChat::from_json("scripted:bench-test", &script).unwrap();
        (fixture, samples, chat)
    }

    #[test]
    fn hand_scored_mean_and_counters() {
        let (fixture, samples, chat) = three_question_setup();
        let toolbox = demo::toolbox(&fixture.url());
        let out = tempfile::tempdir().unwrap();
        let report = run_benchmark(
            &toolbox,
            &chat,
            &samples,
            &BenchOptions::default(),
            out.path(),
        )
        .unwrap();
        assert_eq!(report.samples, 3);
        assert_eq!(report.scored, 3);
        assert!((report.mean_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.counters.answered, 2);
        assert_eq!(report.counters.cancelled, 1);
        assert_eq!(report.counters.error, 0);
        assert_eq!(report.counters.excluded, 0);
        assert_eq!(report.per_kg["test"].samples, 3);
        for file in ["config.json", "scores.jsonl", "report.json"] {
            assert!(out.path().join(file).exists(), "{file} missing");
        }
        for id in ["s1", "s2", "s3"] {
            assert!(out.path().join("traces").join(format!("{id}.jsonl")).exists());
        }
        // The cancelled sample scored zero via the no-query path.
        let lines = std::fs::read_to_string(out.path().join("scores.jsonl")).unwrap();
        let records: Vec<SampleScore> = lines
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(records[2].outcome, RunOutcome::Cancelled);
        assert_eq!(records[2].path, ScorePath::Error);
        assert_eq!(records[0].f1, 1.0);
        assert_eq!(records[1].f1, 0.0);
    }

    #[test]
    fn score_files_are_byte_identical_across_runs_and_parallelism() {
        let (fixture, samples, chat) = three_question_setup();
        let toolbox = demo::toolbox(&fixture.url());
        let read = |dir: &Path| std::fs::read(dir.join("scores.jsonl")).unwrap();
        let mut outputs = Vec::new();
        for parallelism in [1, 1, 3] {
            let out = tempfile::tempdir().unwrap();
            let options = BenchOptions {
                parallelism,
                ..BenchOptions::default()
            };
            run_benchmark(&toolbox, &chat, &samples, &options, out.path()).unwrap();
            outputs.push(read(out.path()));
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }

    #[test]
    fn seeded_sampling_is_deterministic_and_bounded() {
        let rows = select_json(&["x"], &[vec![("x", "uri", &format!("{WD}Q42"))]]);
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &rows)]);
        let toolbox = demo::toolbox(&fixture.url());
        let samples: Vec<BenchmarkSample> = (0..10)
            .map(|i| {
                sample(
                    &format!("id{i}"),
                    &format!("question {i}"),
                    "SELECT ?x WHERE { ?x ?p ?o }",
                )
            })
            .collect();
        let chat = ScriptedChat::from_json(
            "scripted:sampling",
            &format!(r#"{{"default": {}}}"#, answer_script("SELECT ?x WHERE { ?x ?p ?o }")),
        )
        .unwrap();
        let sampled_ids = |seed: u64| {
            let out = tempfile::tempdir().unwrap();
            let options = BenchOptions {
                n: 4,
                seed,
                ..BenchOptions::default()
            };
            let report =
                run_benchmark(&toolbox, &chat, &samples, &options, out.path()).unwrap();
            assert_eq!(report.samples, 4);
            let config: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(out.path().join("config.json")).unwrap(),
            )
            .unwrap();
            config["sampled_ids"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_str().unwrap().to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(sampled_ids(9), sampled_ids(9));
        // n larger than the dataset evaluates everything.
        let out = tempfile::tempdir().unwrap();
        let report = run_benchmark(
            &toolbox,
            &chat,
            &samples,
            &BenchOptions::default(),
            out.path(),
        )
        .unwrap();
        assert_eq!(report.samples, 10);
    }

    #[test]
    fn empty_and_failing_ground_truth_are_excluded() {
        let q42 = select_json(&["x"], &[vec![("x", "uri", &format!("{WD}Q42"))]]);
        let fixture = FixtureEndpoint::start(vec![
            FixtureRule::json("\"gt-empty\"", &select_json(&["x"], &[])),
            FixtureRule::status("\"gt-broken\"", 500, "exploded"),
            FixtureRule::json("\"gt-good\"", &q42),
            FixtureRule::json("", &q42),
        ]);
        let toolbox = demo::toolbox(&fixture.url());
        let samples = vec![
            sample("ok", "q one", "SELECT ?x WHERE { ?x ?p \"gt-good\" }"),
            sample("empty", "q one", "SELECT ?x WHERE { ?x ?p \"gt-empty\" }"),
            sample("broken", "q one", "SELECT ?x WHERE { ?x ?p \"gt-broken\" }"),
        ];
        let chat = ScriptedChat::from_json(
            "scripted:excluded",
            &format!(r#"{{"default": {}}}"#, answer_script("SELECT ?x WHERE { ?x ?p ?o }")),
        )
        .unwrap();
        let out = tempfile::tempdir().unwrap();
        let report = run_benchmark(
            &toolbox,
            &chat,
            &samples,
            &BenchOptions::default(),
            out.path(),
        )
        .unwrap();
        assert_eq!(report.samples, 3);
        assert_eq!(report.scored, 1);
        assert_eq!(report.counters.excluded, 2);
        assert_eq!(report.counters.invalid_gt, 1);
        // The one scored sample answered correctly.
        assert_eq!(report.mean_f1, 1.0);
    }

    #[test]
    fn ground_truth_cache_is_reused_across_runs() {
        let q42 = select_json(&["x"], &[vec![("x", "uri", &format!("{WD}Q42"))]]);
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &q42)]);
        let toolbox = demo::toolbox(&fixture.url());
        let samples = vec![sample("only", "q one", "SELECT ?x WHERE { ?x ?p \"gt\" }")];
        let chat = ScriptedChat::from_json(
            "scripted:cache",
            &format!(r#"{{"default": {}}}"#, answer_script("SELECT ?x WHERE { ?x ?p ?o }")),
        )
        .unwrap();
        let cache_dir = tempfile::tempdir().unwrap();
        let run = || {
            let out = tempfile::tempdir().unwrap();
            let options = BenchOptions {
                gt_cache: Some(cache_dir.path().to_path_buf()),
                ..BenchOptions::default()
            };
            run_benchmark(&toolbox, &chat, &samples, &options, out.path()).unwrap();
        };
        run();
        let after_first = fixture.request_count();
        run();
        let after_second = fixture.request_count();
        // Second run re-probes and re-executes the prediction but the
        // ground-truth query is served from the cache.
        assert_eq!(after_second - after_first, after_first - 1);
    }

    #[test]
    fn unknown_graph_in_the_dataset_fails_fast() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let mut bad = sample("x", "q", "ASK { ?s ?p ?o }");
        bad.kg = "nowhere".to_string();
        let chat = ScriptedChat::from_json("scripted:none", r#"{"default": []}"#).unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = run_benchmark(
            &toolbox,
            &chat,
            &[bad],
            &BenchOptions::default(),
            out.path(),
        )
        .unwrap_err();
        assert!(matches!(err, BenchError::UnknownGraph { .. }), "{err}");
        assert_eq!(fixture.request_count(), 0);
    }

    #[test]
    fn unreachable_endpoint_fails_before_any_session() {
        let fixture = FixtureEndpoint::start(vec![FixtureRule::status("", 503, "down")]);
        let toolbox = demo::toolbox(&fixture.url());
        let samples = vec![sample("x", "q", "ASK { ?s ?p ?o }")];
        let chat = ScriptedChat::from_json("scripted:none", r#"{"default": []}"#).unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = run_benchmark(
            &toolbox,
            &chat,
            &samples,
            &BenchOptions::default(),
            out.path(),
        )
        .unwrap_err();
        assert!(matches!(err, BenchError::Endpoint { .. }), "{err}");
    }

    #[test]
    fn trace_names_stay_distinct_after_sanitizing() {
        assert_eq!(trace_file_name("plain-id_1"), "plain-id_1.jsonl");
        let a = trace_file_name("a/b");
        let b = trace_file_name("a?b");
        assert_ne!(a, b);
        assert!(a.starts_with("a_b-"));
    }
}
