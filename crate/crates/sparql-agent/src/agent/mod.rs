//! The question answering loop.
//!
//! A session is one conversation: instruction, task, then alternating
//! model turns and function results until the model answers, gives up,
//! or runs out of turns. The model drives; the loop executes calls,
//! accumulates every IRI the results mention, and enforces the
//! configured function set, the optional answer review pass, and the
//! optional strict IRI guard.

pub mod chat;
mod feedback;
mod guard;
mod instruction;

pub use chat::{chat_client, ChatClient, ChatError, ChatMessage, ChatReply, Role};
pub use feedback::{parse_verdict, review, FeedbackStatus, FeedbackVerdict, ReviewInput};
pub use guard::{check_query, rejection_text};
pub use instruction::{build_instruction, task_message, QUERY_RULES};

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::prefix::PrefixTable;
use crate::sparql::render_table;
use crate::toolbox::{
    extract_iris, spec_for, FunctionCall, FunctionResult, FunctionSpec, Mnemonic, Toolbox,
    ToolboxError,
};

/// Which functions the model may call. Every set contains the three
/// base functions; the others differ in how search is exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionSet {
    /// answer, cancel, execute.
    B,
    /// Base plus list and the keyword and similarity searches.
    S,
    /// The search set plus the entity-scoped search functions.
    Se,
    /// Base plus list and autocomplete search.
    Sa,
    /// Base plus list and constrained search.
    Sc,
}

impl FunctionSet {
    pub const ALL: [FunctionSet; 5] = [
        FunctionSet::B,
        FunctionSet::S,
        FunctionSet::Se,
        FunctionSet::Sa,
        FunctionSet::Sc,
    ];

    pub fn parse(s: &str) -> Option<FunctionSet> {
        match s.to_lowercase().as_str() {
            "b" => Some(FunctionSet::B),
            "s" => Some(FunctionSet::S),
            "se" => Some(FunctionSet::Se),
            "sa" => Some(FunctionSet::Sa),
            "sc" => Some(FunctionSet::Sc),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionSet::B => "b",
            FunctionSet::S => "s",
            FunctionSet::Se => "se",
            FunctionSet::Sa => "sa",
            FunctionSet::Sc => "sc",
        }
    }

    /// The members, in a fixed order. Few-shot mode adds the example
    /// functions to every set.
    pub fn members(self, few_shot: bool) -> Vec<Mnemonic> {
        use Mnemonic::*;
        let mut members = match self {
            FunctionSet::B => vec![Ans, Can, Exe],
            FunctionSet::S => vec![Ans, Can, Exe, Lst, Sen, Spr],
            FunctionSet::Se => vec![Ans, Can, Exe, Lst, Sen, Spr, Spe, Sop],
            FunctionSet::Sa => vec![Ans, Can, Exe, Lst, Sac],
            FunctionSet::Sc => vec![Ans, Can, Exe, Lst, Scn],
        };
        if few_shot {
            members.push(Fse);
            members.push(Fex);
        }
        members
    }
}

/// How few-shot examples are picked for priming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FewShotMode {
    Similar,
    Random,
}

impl FewShotMode {
    pub fn parse(s: &str) -> Option<FewShotMode> {
        match s.to_lowercase().as_str() {
            "similar" => Some(FewShotMode::Similar),
            "random" => Some(FewShotMode::Random),
            _ => None,
        }
    }

    fn mnemonic(self) -> Mnemonic {
        match self {
            FewShotMode::Similar => Mnemonic::Fse,
            FewShotMode::Random => Mnemonic::Fex,
        }
    }
}

pub const DEFAULT_MAX_TURNS: usize = 30;
pub const DEFAULT_FEEDBACK_ROUNDS: usize = 2;
pub const DEFAULT_SHOTS: usize = 3;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub question: String,
    /// Restrict the session to one graph; the model may otherwise pick
    /// any registered graph.
    pub kg: Option<String>,
    pub function_set: FunctionSet,
    pub few_shot: Option<FewShotMode>,
    pub shots: usize,
    /// Review answers in a fresh conversation before committing them.
    pub feedback: bool,
    /// Reject executed queries that use IRIs no result has mentioned.
    pub strict_iri_guard: bool,
    pub max_turns: usize,
    pub max_feedback_rounds: usize,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(question: impl Into<String>) -> Self {
        SessionConfig {
            question: question.into(),
            kg: None,
            function_set: FunctionSet::S,
            few_shot: None,
            shots: DEFAULT_SHOTS,
            feedback: false,
            strict_iri_guard: false,
            max_turns: DEFAULT_MAX_TURNS,
            max_feedback_rounds: DEFAULT_FEEDBACK_ROUNDS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionOutcome {
    /// The model committed a final query.
    Answered,
    /// The model gave up explicitly.
    Cancelled,
    /// The turn budget ran out; the last successfully executed query
    /// stands in as the attempt.
    Exhausted,
}

impl SessionOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionOutcome::Answered => "answered",
            SessionOutcome::Cancelled => "cancelled",
            SessionOutcome::Exhausted => "exhausted",
        }
    }
}

/// One line of the session trace, written as JSONL by the callers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Instruction {
        text: String,
    },
    Task {
        text: String,
    },
    FewShot {
        name: String,
        kg: String,
        rendered: String,
    },
    Model {
        turn: usize,
        text: String,
        calls: Vec<FunctionCall>,
    },
    FunctionResult {
        name: String,
        ok: bool,
        rendered: String,
    },
    Feedback {
        round: usize,
        status: String,
        message: String,
    },
    Outcome {
        outcome: SessionOutcome,
        sparql: Option<String>,
        kg: Option<String>,
        turns: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionResult {
    pub outcome: SessionOutcome,
    /// The committed query: the answer's, the cancel's best attempt, or
    /// on exhaustion the last query that executed without error.
    pub sparql: Option<String>,
    pub kg: Option<String>,
    /// Final model text: the stated answer, or the cancellation
    /// explanation.
    pub answer: Option<String>,
    pub turns: usize,
    pub function_calls: usize,
    pub feedback_rounds: usize,
    pub model_id: String,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Toolbox(#[from] ToolboxError),
}

const NUDGE: &str =
    "Continue. Use the functions to make progress, or finish with answer or cancel.";

/// What a processed model reply means for the session.
enum TurnOutcome {
    Continue,
    Finished(SessionOutcome, Option<String>, Option<String>, Option<String>),
}

struct Session<'a> {
    toolbox: &'a Toolbox,
    chat: &'a dyn ChatClient,
    config: &'a SessionConfig,
    specs: Vec<FunctionSpec>,
    allowed: BTreeSet<&'static str>,
    messages: Vec<ChatMessage>,
    trace: Vec<TraceEvent>,
    seen_iris: BTreeSet<String>,
    rng: StdRng,
    best_attempt: Option<(String, String)>,
    function_calls: usize,
    feedback_rounds: usize,
}

/// Run one session to completion.
pub fn run_session(
    toolbox: &Toolbox,
    chat: &dyn ChatClient,
    config: &SessionConfig,
) -> Result<SessionResult, SessionError> {
    let members = config.function_set.members(config.few_shot.is_some());
    let specs: Vec<FunctionSpec> = members.iter().map(|m| spec_for(*m)).collect();
    let allowed: BTreeSet<&'static str> = members.iter().map(|m| m.wire_name()).collect();

    let instruction = build_instruction(&toolbox.graph_endpoints());
    let task = task_message(&config.question, config.kg.as_deref());

    let mut seen_iris = BTreeSet::new();
    for name in toolbox.graph_names() {
        let prefixes = &toolbox.graph(name).expect("listed graph").config.prefixes;
        seen_iris.extend(extract_iris(&instruction, prefixes));
    }

    let mut session = Session {
        toolbox,
        chat,
        config,
        specs,
        allowed,
        messages: vec![
            ChatMessage::system(instruction.clone()),
            ChatMessage::user(task.clone()),
        ],
        trace: vec![
            TraceEvent::Instruction { text: instruction },
            TraceEvent::Task { text: task },
        ],
        seen_iris,
        rng: StdRng::seed_from_u64(config.seed),
        best_attempt: None,
        function_calls: 0,
        feedback_rounds: 0,
    };

    if let Some(mode) = config.few_shot {
        session.inject_few_shot(mode)?;
    }

    let mut turns = 0;
    while turns < config.max_turns {
        let reply = session.chat.complete(&session.messages, &session.specs)?;
        turns += 1;
        session
            .messages
            .push(ChatMessage::model(reply.text.clone(), reply.calls.clone()));
        session.trace.push(TraceEvent::Model {
            turn: turns,
            text: reply.text.clone(),
            calls: reply.calls.clone(),
        });

        if reply.calls.is_empty() {
            session.messages.push(ChatMessage::user(NUDGE));
            continue;
        }
        match session.process_calls(&reply.calls)? {
            TurnOutcome::Continue => {}
            TurnOutcome::Finished(outcome, sparql, kg, answer) => {
                return Ok(session.finish(outcome, sparql, kg, answer, turns));
            }
        }
    }

    let (sparql, kg) = match session.best_attempt.clone() {
        Some((sparql, kg)) => (Some(sparql), Some(kg)),
        None => (None, None),
    };
    Ok(session.finish(SessionOutcome::Exhausted, sparql, kg, None, turns))
}

impl Session<'_> {
    fn finish(
        mut self,
        outcome: SessionOutcome,
        sparql: Option<String>,
        kg: Option<String>,
        answer: Option<String>,
        turns: usize,
    ) -> SessionResult {
        self.trace.push(TraceEvent::Outcome {
            outcome,
            sparql: sparql.clone(),
            kg: kg.clone(),
            turns,
        });
        SessionResult {
            outcome,
            sparql,
            kg,
            answer,
            turns,
            function_calls: self.function_calls,
            feedback_rounds: self.feedback_rounds,
            model_id: self.chat.model_id().to_string(),
            trace: self.trace,
        }
    }

    /// Fabricate an example lookup exchange ahead of the first model
    /// turn, one per graph that has examples.
    fn inject_few_shot(&mut self, mode: FewShotMode) -> Result<(), SessionError> {
        let name = mode.mnemonic().wire_name();
        let graphs: Vec<String> = match &self.config.kg {
            Some(kg) => vec![kg.clone()],
            None => self
                .toolbox
                .graph_names()
                .into_iter()
                .map(String::from)
                .collect(),
        };
        for kg in graphs {
            let question = match mode {
                FewShotMode::Similar => Some(self.config.question.as_str()),
                FewShotMode::Random => None,
            };
            let Some(result) = self.toolbox.render_examples_for(
                &kg,
                question,
                self.config.shots,
                &mut self.rng,
            )?
            else {
                continue;
            };
            let mut arguments = serde_json::json!({ "kg": kg });
            if let Some(q) = question {
                arguments["question"] = Value::String(q.to_string());
            }
            let call = FunctionCall {
                id: format!("fewshot_{kg}"),
                name: name.to_string(),
                arguments,
            };
            self.messages
                .push(ChatMessage::model_synthetic("", vec![call.clone()]));
            self.messages
                .push(ChatMessage::function(&call, result.rendered.clone()));
            self.seen_iris.extend(result.mentioned_iris.iter().cloned());
            self.trace.push(TraceEvent::FewShot {
                name: name.to_string(),
                kg,
                rendered: result.rendered,
            });
        }
        Ok(())
    }

    fn push_result(&mut self, call: &FunctionCall, result: &FunctionResult) {
        self.messages
            .push(ChatMessage::function(call, result.rendered.clone()));
        self.seen_iris.extend(result.mentioned_iris.iter().cloned());
        self.trace.push(TraceEvent::FunctionResult {
            name: call.name.clone(),
            ok: result.ok,
            rendered: result.rendered.clone(),
        });
    }

    fn push_error(&mut self, call: &FunctionCall, message: String) {
        let result = FunctionResult::error(message, &PrefixTable::new());
        self.push_result(call, &result);
    }

    /// Run the calls of one reply in order. A terminator (valid or not)
    /// consumes the rest of the reply; skipped calls are answered so
    /// the transcript stays well formed.
    fn process_calls(&mut self, calls: &[FunctionCall]) -> Result<TurnOutcome, SessionError> {
        for (i, call) in calls.iter().enumerate() {
            self.function_calls += 1;

            if !self.allowed.contains(call.name.as_str()) {
                let available = self
                    .allowed
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
                    .join(", ");
                self.push_error(
                    call,
                    format!(
                        "function {} is not available in this session; available functions: {available}",
                        call.name
                    ),
                );
                continue;
            }

            let mnemonic = Mnemonic::from_wire_name(&call.name).expect("allowed implies known");
            if matches!(mnemonic, Mnemonic::Ans | Mnemonic::Can) {
                let outcome = self.process_terminator(mnemonic, call)?;
                if !matches!(outcome, TurnOutcome::Continue) {
                    for skipped in &calls[i + 1..] {
                        self.messages.push(ChatMessage::function(
                            skipped,
                            "skipped: the session was concluded by an earlier call",
                        ));
                    }
                } else {
                    for skipped in &calls[i + 1..] {
                        self.messages.push(ChatMessage::function(
                            skipped,
                            "skipped: resolve the feedback on your answer first",
                        ));
                    }
                }
                return Ok(outcome);
            }

            if mnemonic == Mnemonic::Exe && self.config.strict_iri_guard {
                if let Some(sparql) = call.arguments.get("sparql").and_then(Value::as_str) {
                    let prefixes = call
                        .arguments
                        .get("kg")
                        .and_then(Value::as_str)
                        .and_then(|kg| self.toolbox.graph(kg))
                        .map(|g| g.config.prefixes.clone())
                        .unwrap_or_default();
                    if let Err(offenders) = check_query(sparql, &prefixes, &self.seen_iris) {
                        self.push_error(call, rejection_text(&offenders));
                        continue;
                    }
                }
            }

            let result = self.toolbox.invoke(call, &mut self.rng)?;
            if mnemonic == Mnemonic::Exe && result.ok {
                let sparql = call.arguments.get("sparql").and_then(Value::as_str);
                let kg = call.arguments.get("kg").and_then(Value::as_str);
                if let (Some(sparql), Some(kg)) = (sparql, kg) {
                    self.best_attempt = Some((sparql.to_string(), kg.to_string()));
                }
            }
            self.push_result(call, &result);
        }
        Ok(TurnOutcome::Continue)
    }

    /// Handle answer or cancel: validate arguments, run the review pass
    /// if configured, and either finish or send the session back to
    /// work.
    fn process_terminator(
        &mut self,
        mnemonic: Mnemonic,
        call: &FunctionCall,
    ) -> Result<TurnOutcome, SessionError> {
        let arg = |name: &str| -> Option<String> {
            call.arguments
                .get(name)
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
        };

        let (outcome, sparql, kg, answer, explanation) = match mnemonic {
            Mnemonic::Ans => {
                let (Some(sparql), Some(kg), Some(answer)) =
                    (arg("sparql"), arg("kg"), arg("answer"))
                else {
                    self.push_error(
                        call,
                        "answer requires kg, sparql, and answer arguments".to_string(),
                    );
                    return Ok(TurnOutcome::Continue);
                };
                if self.toolbox.graph(&kg).is_none() {
                    let known = self.toolbox.graph_names().join(", ");
                    self.push_error(
                        call,
                        format!("unknown knowledge graph {kg:?}; registered graphs: {known}"),
                    );
                    return Ok(TurnOutcome::Continue);
                }
                (
                    SessionOutcome::Answered,
                    Some(sparql),
                    Some(kg),
                    Some(answer),
                    None,
                )
            }
            Mnemonic::Can => {
                let Some(explanation) = arg("explanation") else {
                    self.push_error(call, "cancel requires an explanation argument".to_string());
                    return Ok(TurnOutcome::Continue);
                };
                let attempt = call.arguments.get("best_attempt").and_then(|v| {
                    let sparql = v.get("sparql").and_then(Value::as_str)?;
                    let kg = v.get("kg").and_then(Value::as_str)?;
                    Some((sparql.to_string(), kg.to_string()))
                });
                let (sparql, kg) = match attempt.or_else(|| self.best_attempt.clone()) {
                    Some((sparql, kg)) => (Some(sparql), Some(kg)),
                    None => (None, None),
                };
                (
                    SessionOutcome::Cancelled,
                    sparql,
                    kg,
                    Some(explanation.clone()),
                    Some(explanation),
                )
            }
            _ => unreachable!("terminators only"),
        };

        if self.config.feedback && self.feedback_rounds < self.config.max_feedback_rounds {
            let execution = match (&sparql, &kg) {
                (Some(sparql), Some(kg)) => Some(self.execute_for_review(sparql, kg)),
                _ => None,
            };
            let input = ReviewInput {
                question: &self.config.question,
                kg: kg.as_deref().unwrap_or("unspecified"),
                sparql: sparql.as_deref(),
                explanation: explanation.as_deref(),
                execution: execution.as_deref(),
            };
            let verdict = review(self.chat, &input);
            self.feedback_rounds += 1;
            self.trace.push(TraceEvent::Feedback {
                round: self.feedback_rounds,
                status: verdict.status.as_str().to_string(),
                message: verdict.message.clone(),
            });
            if verdict.status != FeedbackStatus::Done {
                self.messages.push(ChatMessage::function(
                    call,
                    "the attempt was reviewed; see the feedback that follows",
                ));
                let directive = match verdict.status {
                    FeedbackStatus::Refine => {
                        "Adjust the query accordingly and answer again."
                    }
                    FeedbackStatus::Retry => {
                        "Start over with a different approach and answer again."
                    }
                    FeedbackStatus::Done => unreachable!("handled above"),
                };
                self.messages.push(ChatMessage::user(format!(
                    "Feedback on your attempt: {}\n{directive}",
                    verdict.message
                )));
                return Ok(TurnOutcome::Continue);
            }
        }

        Ok(TurnOutcome::Finished(outcome, sparql, kg, answer))
    }

    /// Best-effort execution of the committed query so the reviewer
    /// sees what it produces.
    fn execute_for_review(&self, sparql: &str, kg: &str) -> String {
        match self.toolbox.graph(kg) {
            None => format!("unknown knowledge graph {kg:?}"),
            Some(g) => match g.client.execute(sparql) {
                Ok(table) => render_table(&table),
                Err(e) => format!("query failed: {e}"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{demo, select_json, FixtureEndpoint, FixtureRule};
    use chat::ScriptedChat;

    fn scripted(json: &str) -> ScriptedChat {
        ScriptedChat::from_json("scripted:test", json).unwrap()
    }

    fn config(question: &str) -> SessionConfig {
        SessionConfig::new(question)
    }

    const ANSWER_QUERY: &str = "SELECT DISTINCT ?u WHERE { ?s ?p ?u }";

    fn answer_turn(sparql: &str) -> String {
        format!(
            r#"{{"text": "final", "calls": [{{"name": "answer", "arguments":
                {{"kg": "test", "sparql": {sparql:?}, "answer": "it is so"}}}}]}}"#
        )
    }

    #[test]
    fn function_set_members_are_exact() {
        use Mnemonic::*;
        assert_eq!(FunctionSet::B.members(false), vec![Ans, Can, Exe]);
        assert_eq!(
            FunctionSet::S.members(false),
            vec![Ans, Can, Exe, Lst, Sen, Spr]
        );
        assert_eq!(
            FunctionSet::Se.members(false),
            vec![Ans, Can, Exe, Lst, Sen, Spr, Spe, Sop]
        );
        assert_eq!(FunctionSet::Sa.members(false), vec![Ans, Can, Exe, Lst, Sac]);
        assert_eq!(FunctionSet::Sc.members(false), vec![Ans, Can, Exe, Lst, Scn]);
        for set in FunctionSet::ALL {
            let plain = set.members(false);
            let few = set.members(true);
            assert_eq!(few.len(), plain.len() + 2);
            assert!(few.contains(&Fse) && few.contains(&Fex));
            assert!(!plain.contains(&Fse) && !plain.contains(&Fex));
        }
    }

    #[test]
    fn function_set_parsing_round_trips() {
        for set in FunctionSet::ALL {
            assert_eq!(FunctionSet::parse(set.as_str()), Some(set));
        }
        assert_eq!(FunctionSet::parse("SE"), Some(FunctionSet::Se));
        assert_eq!(FunctionSet::parse("x"), None);
    }

    #[test]
    fn answered_session_records_query_and_trace() {
        let rows = select_json(
            &["u"],
            &[vec![("u", "uri", "http://www.wikidata.org/entity/Q5")]],
        );
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &rows)]);
        let toolbox = demo::toolbox(&fixture.url());
        let script = format!(
            r#"{{"default": [
                {{"text": "searching", "calls": [{{"name": "search_entity",
                    "arguments": {{"kg": "test", "query": "human"}}}}]}},
                {{"text": "executing", "calls": [{{"name": "execute",
                    "arguments": {{"kg": "test", "sparql": {ANSWER_QUERY:?}}}}}]}},
                {}
            ]}}"#,
            answer_turn(ANSWER_QUERY)
        );
        let chat = scripted(&script);
        let result = run_session(&toolbox, &chat, &config("How many humans?")).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        assert_eq!(result.sparql.as_deref(), Some(ANSWER_QUERY));
        assert_eq!(result.kg.as_deref(), Some("test"));
        assert_eq!(result.answer.as_deref(), Some("it is so"));
        assert_eq!(result.turns, 3);
        assert_eq!(result.function_calls, 3);
        assert_eq!(result.feedback_rounds, 0);
        let kinds: Vec<&str> = result
            .trace
            .iter()
            .map(|e| match e {
                TraceEvent::Instruction { .. } => "instruction",
                TraceEvent::Task { .. } => "task",
                TraceEvent::FewShot { .. } => "few_shot",
                TraceEvent::Model { .. } => "model",
                TraceEvent::FunctionResult { .. } => "function_result",
                TraceEvent::Feedback { .. } => "feedback",
                TraceEvent::Outcome { .. } => "outcome",
            })
            .collect();
        assert_eq!(
            kinds,
            vec![
                "instruction",
                "task",
                "model",
                "function_result",
                "model",
                "function_result",
                "model",
                "outcome"
            ]
        );
    }

    #[test]
    fn cancelled_session_keeps_the_best_attempt() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let chat = scripted(
            r#"{"default": [
                {"text": "hopeless", "calls": [{"name": "cancel", "arguments": {
                    "explanation": "the graph lacks this information",
                    "best_attempt": {"sparql": "SELECT ?x WHERE { ?x ?p ?o }", "kg": "test"}
                }}]}
            ]}"#,
        );
        let result = run_session(&toolbox, &chat, &config("unanswerable")).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Cancelled);
        assert_eq!(result.sparql.as_deref(), Some("SELECT ?x WHERE { ?x ?p ?o }"));
        assert_eq!(result.kg.as_deref(), Some("test"));
        assert_eq!(result.turns, 1);
    }

    #[test]
    fn exhaustion_falls_back_to_last_successful_execute() {
        let rows = select_json(
            &["s"],
            &[vec![("s", "uri", "http://www.wikidata.org/entity/Q42")]],
        );
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &rows)]);
        let toolbox = demo::toolbox(&fixture.url());
        let chat = scripted(
            r#"{"default": [
                {"calls": [{"name": "execute", "arguments":
                    {"kg": "test", "sparql": "SELECT ?s WHERE { ?s ?p 1 }"}}]},
                {"calls": [{"name": "execute", "arguments":
                    {"kg": "test", "sparql": "SELECT ?s WHERE { ?s ?p 2 }"}}]}
            ]}"#,
        );
        let mut cfg = config("q");
        cfg.max_turns = 2;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Exhausted);
        assert_eq!(result.sparql.as_deref(), Some("SELECT ?s WHERE { ?s ?p 2 }"));
        assert_eq!(result.turns, 2);
    }

    #[test]
    fn exhaustion_without_any_execute_has_no_query() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let chat = scripted(
            r#"{"default": [
                {"calls": [{"name": "search_entity",
                    "arguments": {"kg": "test", "query": "cat"}}]}
            ]}"#,
        );
        let mut cfg = config("q");
        cfg.max_turns = 1;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Exhausted);
        assert_eq!(result.sparql, None);
    }

    #[test]
    fn out_of_set_calls_are_rejected_visibly() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let script = format!(
            r#"{{"default": [
                {{"calls": [{{"name": "search_entity",
                    "arguments": {{"kg": "test", "query": "cat"}}}}]}},
                {}
            ]}}"#,
            answer_turn("ASK { ?s ?p ?o }")
        );
        let chat = scripted(&script);
        let mut cfg = config("q");
        cfg.function_set = FunctionSet::B;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        let rejected = result.trace.iter().any(|e| matches!(
            e,
            TraceEvent::FunctionResult { name, ok: false, rendered }
                if name == "search_entity" && rendered.contains("not available")
        ));
        assert!(rejected);
        // The rejection names what is available.
        let named = result.trace.iter().any(|e| matches!(
            e,
            TraceEvent::FunctionResult { rendered, .. }
                if rendered.contains("answer, cancel, execute")
        ));
        assert!(named);
    }

    #[test]
    fn text_only_turns_are_nudged_along() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let script = format!(
            r#"{{"default": [
                {{"text": "let me think about this"}},
                {}
            ]}}"#,
            answer_turn("SELECT ?x WHERE { ?x ?p ?o }")
        );
        let chat = scripted(&script);
        let result = run_session(&toolbox, &chat, &config("q")).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        assert_eq!(result.turns, 2);
    }

    #[test]
    fn invalid_answer_arguments_keep_the_session_alive() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let script = format!(
            r#"{{"default": [
                {{"calls": [{{"name": "answer", "arguments": {{"kg": "test"}}}}]}},
                {{"calls": [{{"name": "answer", "arguments":
                    {{"kg": "nowhere", "sparql": "SELECT ?x WHERE {{}}", "answer": "x"}}}}]}},
                {}
            ]}}"#,
            answer_turn("SELECT ?x WHERE { ?x ?p ?o }")
        );
        let chat = scripted(&script);
        let result = run_session(&toolbox, &chat, &config("q")).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        assert_eq!(result.turns, 3);
        let errors: Vec<&str> = result
            .trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::FunctionResult { ok: false, rendered, .. } => {
                    Some(rendered.as_str())
                }
                _ => None,
            })
            .collect();
        assert_eq!(errors.len(), 2);
        assert!(errors[0].contains("requires kg, sparql, and answer"));
        assert!(errors[1].contains("unknown knowledge graph"));
    }

    #[test]
    fn strict_guard_blocks_unseen_iris_before_the_endpoint() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let script = format!(
            r#"{{"default": [
                {{"calls": [{{"name": "execute", "arguments": {{"kg": "test",
                    "sparql": "SELECT ?x WHERE {{ ?x <http://www.wikidata.org/prop/direct/P9999> ?o }}"}}}}]}},
                {}
            ]}}"#,
            answer_turn("ASK { ?s ?p ?o }")
        );
        let chat = scripted(&script);
        let mut cfg = config("q");
        cfg.strict_iri_guard = true;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        let blocked = result.trace.iter().any(|e| matches!(
            e,
            TraceEvent::FunctionResult { name, ok: false, rendered }
                if name == "execute" && rendered.contains("query rejected")
                    && rendered.contains("P9999")
        ));
        assert!(blocked);
        // The blocked query never reached the endpoint.
        assert_eq!(fixture.request_count(), 0);
    }

    #[test]
    fn strict_guard_accepts_iris_from_results() {
        let rows = select_json(
            &["o"],
            &[vec![("o", "uri", "http://www.wikidata.org/entity/Q5")]],
        );
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &rows)]);
        let toolbox = demo::toolbox(&fixture.url());
        // The entity search result mentions wd:Q42; the property search
        // result mentions wdt:P31. The executed query uses both.
        let script = format!(
            r#"{{"default": [
                {{"calls": [
                    {{"name": "search_entity", "arguments": {{"kg": "test", "query": "douglas adams"}}}},
                    {{"name": "search_property", "arguments": {{"kg": "test", "query": "instance of"}}}}
                ]}},
                {{"calls": [{{"name": "execute", "arguments": {{"kg": "test",
                    "sparql": "SELECT ?o WHERE {{ <http://www.wikidata.org/entity/Q42> <http://www.wikidata.org/prop/direct/P31> ?o }}"}}}}]}},
                {}
            ]}}"#,
            answer_turn("SELECT ?o WHERE { ?s ?p ?o }")
        );
        let chat = scripted(&script);
        let mut cfg = config("what is Douglas Adams?");
        cfg.strict_iri_guard = true;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        let execute_ok = result.trace.iter().any(|e| {
            matches!(e, TraceEvent::FunctionResult { name, ok: true, .. } if name == "execute")
        });
        assert!(execute_ok);
        assert_eq!(fixture.request_count(), 1);
    }

    #[test]
    fn feedback_refine_then_done() {
        let rows = select_json(
            &["u"],
            &[vec![("u", "uri", "http://www.wikidata.org/entity/Q5")]],
        );
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &rows)]);
        let toolbox = demo::toolbox(&fixture.url());
        // The review prompt quotes the proposed query, so verdict turns
        // key on query fragments: the first answer (no DISTINCT) draws
        // refine, the revised one draws done.
        let script = format!(
            r#"{{
                "default": [
                    {},
                    {}
                ],
                "by_question": {{
                    "Proposed SPARQL:\nSELECT ?u": [
                        {{"text": "{{\"status\": \"refine\", \"message\": \"use DISTINCT\"}}"}}
                    ],
                    "Proposed SPARQL:\nSELECT DISTINCT ?u": [
                        {{"text": "{{\"status\": \"done\", \"message\": \"\"}}"}}
                    ]
                }}
            }}"#,
            answer_turn("SELECT ?u WHERE { ?s ?p ?u }"),
            answer_turn("SELECT DISTINCT ?u WHERE { ?s ?p ?u }"),
        );
        let chat = scripted(&script);
        let mut cfg = config("Where was Douglas Adams educated?");
        cfg.feedback = true;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        assert_eq!(
            result.sparql.as_deref(),
            Some("SELECT DISTINCT ?u WHERE { ?s ?p ?u }")
        );
        assert_eq!(result.feedback_rounds, 2);
        assert_eq!(result.turns, 2);
        let feedback: Vec<(&usize, &str)> = result
            .trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Feedback { round, status, .. } => Some((round, status.as_str())),
                _ => None,
            })
            .collect();
        assert_eq!(feedback, vec![(&1, "refine"), (&2, "done")]);
        // Review executed the proposed query both times.
        assert_eq!(fixture.request_count(), 2);
    }

    #[test]
    fn feedback_rounds_are_capped() {
        let rows = select_json(&["u"], &[]);
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &rows)]);
        let toolbox = demo::toolbox(&fixture.url());
        // The reviewer always demands another round; the cap must cut
        // it off after two and accept the third answer untouched.
        let answer = answer_turn("SELECT ?u WHERE { ?s ?p ?u }");
        let script = format!(
            r#"{{
                "default": [{answer}, {answer}, {answer}],
                "by_question": {{
                    "Proposed SPARQL:": [
                        {{"text": "{{\"status\": \"refine\", \"message\": \"again\"}}"}}
                    ]
                }}
            }}"#
        );
        let chat = scripted(&script);
        let mut cfg = config("q");
        cfg.feedback = true;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        assert_eq!(result.feedback_rounds, 2);
        assert_eq!(result.turns, 3);
    }

    #[test]
    fn few_shot_primes_the_conversation_without_shifting_script_turns() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let script = format!(r#"{{"default": [{}]}}"#, answer_turn("ASK { ?s ?p ?o }"));
        let chat = scripted(&script);
        let mut cfg = config("Where was Douglas Adams educated?");
        cfg.few_shot = Some(FewShotMode::Similar);
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        assert_eq!(result.turns, 1);
        let primed = result.trace.iter().find_map(|e| match e {
            TraceEvent::FewShot { name, kg, rendered } => Some((name, kg, rendered)),
            _ => None,
        });
        let (name, kg, rendered) = primed.expect("few-shot event");
        assert_eq!(name, "find_similar_examples");
        assert_eq!(kg, "test");
        assert!(rendered.starts_with("1. question: Where was Douglas Adams educated?"));
        assert_eq!(rendered.matches("question:").count(), 3);
    }

    #[test]
    fn few_shot_examples_seed_the_guard() {
        let rows = select_json(
            &["u"],
            &[vec![("u", "uri", "http://www.wikidata.org/entity/Q91")]],
        );
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", &rows)]);
        let toolbox = demo::toolbox(&fixture.url());
        // The similar example for this question contains wd:Q42 and
        // wdt:P69; under the strict guard the session may execute a
        // query over them without searching first.
        let script = format!(
            r#"{{"default": [
                {{"calls": [{{"name": "execute", "arguments": {{"kg": "test",
                    "sparql": "SELECT ?u WHERE {{ <http://www.wikidata.org/entity/Q42> <http://www.wikidata.org/prop/direct/P69> ?u }}"}}}}]}},
                {}
            ]}}"#,
            answer_turn("ASK { ?s ?p ?o }")
        );
        let chat = scripted(&script);
        let mut cfg = config("Where was Douglas Adams educated?");
        cfg.few_shot = Some(FewShotMode::Similar);
        cfg.strict_iri_guard = true;
        let result = run_session(&toolbox, &chat, &cfg).unwrap();
        assert_eq!(result.outcome, SessionOutcome::Answered);
        let execute_ok = result.trace.iter().any(|e| {
            matches!(e, TraceEvent::FunctionResult { name, ok: true, .. } if name == "execute")
        });
        assert!(execute_ok);
    }

    #[test]
    fn script_exhaustion_surfaces_as_a_chat_error() {
        let fixture = FixtureEndpoint::start(vec![]);
        let toolbox = demo::toolbox(&fixture.url());
        let chat = scripted(r#"{"default": []}"#);
        let err = run_session(&toolbox, &chat, &config("q")).unwrap_err();
        assert!(matches!(err, SessionError::Chat(ChatError::ScriptExhausted { .. })));
    }
}
