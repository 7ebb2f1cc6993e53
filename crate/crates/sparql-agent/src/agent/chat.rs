//! Chat model transport: one trait, two implementations.
//!
//! [`HttpChat`] speaks the OpenAI-compatible chat completions protocol
//! with function calling. [`ScriptedChat`] replays canned replies from
//! a JSON file, which makes full sessions runnable in tests and
//! benchmarks without a model. Both are stateless between calls; the
//! conversation is passed in whole every time.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::ChatConfig;
use crate::toolbox::{FunctionCall, FunctionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Model,
    Function,
}

/// One message in a conversation. `calls` is only meaningful for model
/// messages, `call_id` and `name` only for function results.
#[derive(Debug, Clone)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub calls: Vec<FunctionCall>,
    pub call_id: Option<String>,
    pub name: Option<String>,
    /// Injected by the controller (few-shot priming), not produced by
    /// the model. Scripted replay skips these when counting turns.
    pub synthetic: bool,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            text: text.into(),
            calls: Vec::new(),
            call_id: None,
            name: None,
            synthetic: false,
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            text: text.into(),
            calls: Vec::new(),
            call_id: None,
            name: None,
            synthetic: false,
        }
    }

    pub fn model(text: impl Into<String>, calls: Vec<FunctionCall>) -> Self {
        ChatMessage {
            role: Role::Model,
            text: text.into(),
            calls,
            call_id: None,
            name: None,
            synthetic: false,
        }
    }

    /// A model turn the controller fabricated, as for few-shot priming.
    pub fn model_synthetic(text: impl Into<String>, calls: Vec<FunctionCall>) -> Self {
        let mut msg = ChatMessage::model(text, calls);
        msg.synthetic = true;
        msg
    }

    pub fn function(call: &FunctionCall, text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Function,
            text: text.into(),
            calls: Vec::new(),
            call_id: Some(call.id.clone()),
            name: Some(call.name.clone()),
            synthetic: false,
        }
    }
}

/// What the model said: free text plus zero or more function calls, in
/// the order they should be run.
#[derive(Debug, Clone, Default)]
pub struct ChatReply {
    pub text: String,
    pub calls: Vec<FunctionCall>,
}

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("chat transport: {0}")]
    Transport(String),
    #[error("chat protocol: {0}")]
    Protocol(String),
    #[error("cannot load chat script {path}: {problem}")]
    Script { path: PathBuf, problem: String },
    #[error("chat script {script} has no turn {index} for this conversation")]
    ScriptExhausted { script: String, index: usize },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("chat model not configured: {0}")]
    Config(String),
}

pub trait ChatClient: Send + Sync {
    /// Produce the next reply for `messages`, with `tools` advertised.
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[FunctionSpec],
    ) -> Result<ChatReply, ChatError>;

    /// Identifier recorded in run metadata.
    fn model_id(&self) -> &str;
}

/// Build a client from catalog settings and an optional model override.
/// A model of the form `scripted:<path>` selects a replay script; any
/// other model needs a chat URL in the catalog.
pub fn chat_client(
    config: Option<&ChatConfig>,
    model_override: Option<&str>,
) -> Result<Box<dyn ChatClient>, ChatError> {
    let model = match model_override {
        Some(m) => m.to_string(),
        None => match config {
            Some(c) => c.model.clone(),
            None => return Err(ChatError::Config("no [chat] section and no --model".into())),
        },
    };
    if let Some(path) = model.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedChat::load(Path::new(path))?));
    }
    let url = config
        .and_then(|c| c.url.clone())
        .ok_or_else(|| ChatError::Config("chat url is required for an HTTP model".into()))?;
    let mut client = HttpChat::new(url, model);
    if let Some(var) = config.and_then(|c| c.api_key_env.as_deref()) {
        let key = std::env::var(var).map_err(|_| ChatError::MissingApiKey(var.to_string()))?;
        client = client.with_api_key(key);
    }
    Ok(Box::new(client))
}

// ---- HTTP ---------------------------------------------------------------

const CHAT_ATTEMPTS: usize = 3;

pub struct HttpChat {
    url: String,
    model: String,
    api_key: Option<String>,
    backoff: Duration,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpChat {
            url: url.into(),
            model: model.into(),
            api_key: None,
            backoff: Duration::from_millis(500),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("http client"),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Initial retry delay; doubles per attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn request_body(&self, messages: &[ChatMessage], tools: &[FunctionSpec]) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": wire_messages(messages),
        });
        if !tools.is_empty() {
            let tools: Vec<Value> = tools.iter().map(|t| t.to_tool_schema()).collect();
            body["tools"] = Value::Array(tools);
        }
        body
    }
}

fn wire_messages(messages: &[ChatMessage]) -> Vec<Value> {
    messages
        .iter()
        .map(|m| match m.role {
            Role::System => json!({ "role": "system", "content": m.text }),
            Role::User => json!({ "role": "user", "content": m.text }),
            Role::Model => {
                let mut msg = json!({ "role": "assistant", "content": m.text });
                if !m.calls.is_empty() {
                    let calls: Vec<Value> = m
                        .calls
                        .iter()
                        .map(|c| {
                            json!({
                                "id": c.id,
                                "type": "function",
                                "function": {
                                    "name": c.name,
                                    "arguments": c.arguments.to_string(),
                                },
                            })
                        })
                        .collect();
                    msg["tool_calls"] = Value::Array(calls);
                }
                msg
            }
            Role::Function => json!({
                "role": "tool",
                "tool_call_id": m.call_id.as_deref().unwrap_or(""),
                "content": m.text,
            }),
        })
        .collect()
}

/// Parse a chat completion response into a reply. Tool call arguments
/// arrive JSON-encoded inside a string; an unparsable argument string
/// is kept verbatim so the function layer can reject it visibly.
fn parse_completion(body: &Value) -> Result<ChatReply, ChatError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ChatError::Protocol("response has no choices[0].message".into()))?;
    let text = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let mut calls = Vec::new();
    if let Some(raw_calls) = message.get("tool_calls").and_then(Value::as_array) {
        for (i, raw) in raw_calls.iter().enumerate() {
            let name = raw
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| ChatError::Protocol(format!("tool call {i} has no name")))?;
            let raw_args = raw
                .pointer("/function/arguments")
                .and_then(Value::as_str)
                .unwrap_or("{}");
            let arguments = serde_json::from_str(raw_args)
                .unwrap_or_else(|_| Value::String(raw_args.to_string()));
            let id = match raw.get("id").and_then(Value::as_str) {
                Some(id) => id.to_string(),
                None => format!("call_{i}"),
            };
            calls.push(FunctionCall {
                id,
                name: name.to_string(),
                arguments,
            });
        }
    }
    Ok(ChatReply { text, calls })
}

impl ChatClient for HttpChat {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[FunctionSpec],
    ) -> Result<ChatReply, ChatError> {
        let body = self.request_body(messages, tools);
        let mut last_error = String::new();
        for attempt in 0..CHAT_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.backoff * (1 << (attempt - 1)) as u32);
            }
            let mut request = self.client.post(&self.url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            match request.send() {
                Err(e) => last_error = format!("request to {} failed: {e}", self.url),
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let parsed: Value = response.json().map_err(|e| {
                            ChatError::Protocol(format!("response is not valid JSON: {e}"))
                        })?;
                        return parse_completion(&parsed);
                    }
                    let text = response.text().unwrap_or_default();
                    // Client errors other than rate limiting will not
                    // get better on retry.
                    if status.is_client_error() && status.as_u16() != 429 {
                        return Err(ChatError::Protocol(format!("{status}: {text}")));
                    }
                    last_error = format!("{status}: {text}");
                }
            }
        }
        Err(ChatError::Transport(format!(
            "{last_error} (after {CHAT_ATTEMPTS} attempts)"
        )))
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

// ---- scripted -----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScriptCall {
    name: String,
    #[serde(default)]
    arguments: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScriptTurn {
    #[serde(default)]
    text: String,
    #[serde(default)]
    calls: Vec<ScriptCall>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    default: Vec<ScriptTurn>,
    /// Alternative turn sequences, keyed by a substring of the first
    /// user message of the conversation they apply to.
    #[serde(default)]
    by_question: std::collections::BTreeMap<String, Vec<ScriptTurn>>,
}

/// Replays scripted replies. Selection is stateless: the turn sequence
/// is chosen by matching `by_question` keys against the first user
/// message (longest matching key wins, `default` otherwise), and the
/// reply index is the number of model messages already in the
/// conversation. Fresh conversations therefore restart at turn zero,
/// which is exactly what the feedback pass needs.
pub struct ScriptedChat {
    id: String,
    script: ScriptFile,
}

impl ScriptedChat {
    pub fn load(path: &Path) -> Result<Self, ChatError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChatError::Script {
            path: path.to_path_buf(),
            problem: e.to_string(),
        })?;
        let script: ScriptFile =
            serde_json::from_str(&text).map_err(|e| ChatError::Script {
                path: path.to_path_buf(),
                problem: e.to_string(),
            })?;
        Ok(ScriptedChat {
            id: format!("scripted:{}", path.display()),
            script,
        })
    }

    pub fn from_json(id: impl Into<String>, json: &str) -> Result<Self, ChatError> {
        let script: ScriptFile = serde_json::from_str(json).map_err(|e| ChatError::Script {
            path: PathBuf::new(),
            problem: e.to_string(),
        })?;
        Ok(ScriptedChat {
            id: id.into(),
            script,
        })
    }

    fn turns_for(&self, messages: &[ChatMessage]) -> &[ScriptTurn] {
        let first_user = messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
            .unwrap_or("");
        self.script
            .by_question
            .iter()
            .filter(|(key, _)| first_user.contains(key.as_str()))
            .max_by_key(|(key, _)| key.len())
            .map(|(_, turns)| turns.as_slice())
            .unwrap_or(&self.script.default)
    }
}

impl ChatClient for ScriptedChat {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _tools: &[FunctionSpec],
    ) -> Result<ChatReply, ChatError> {
        let index = messages
            .iter()
            .filter(|m| m.role == Role::Model && !m.synthetic)
            .count();
        let turns = self.turns_for(messages);
        let turn = turns.get(index).ok_or_else(|| ChatError::ScriptExhausted {
            script: self.id.clone(),
            index,
        })?;
        let calls = turn
            .calls
            .iter()
            .enumerate()
            .map(|(i, c)| FunctionCall {
                id: format!("call_{index}_{i}"),
                name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        Ok(ChatReply {
            text: turn.text.clone(),
            calls,
        })
    }

    fn model_id(&self) -> &str {
        &self.id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{FixtureEndpoint, FixtureRule};
    use crate::toolbox::function_specs;

    fn two_turn_script() -> ScriptedChat {
        ScriptedChat::from_json(
            "scripted:test",
            r#"{
                "default": [
                    {"text": "thinking", "calls": [{"name": "list", "arguments": {"kg": "g"}}]},
                    {"text": "done", "calls": [{"name": "answer",
                        "arguments": {"kg": "g", "sparql": "SELECT ?x WHERE { ?x ?p ?o }"}}]}
                ],
                "by_question": {
                    "capital": [{"text": "capital turn"}],
                    "capital of France": [{"text": "specific turn"}]
                }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn replays_by_model_message_count() {
        let chat = two_turn_script();
        let mut messages = vec![
            ChatMessage::system("rules"),
            ChatMessage::user("Question: anything"),
        ];
        let first = chat.complete(&messages, &[]).unwrap();
        assert_eq!(first.text, "thinking");
        assert_eq!(first.calls.len(), 1);
        assert_eq!(first.calls[0].name, "list");
        assert_eq!(first.calls[0].id, "call_0_0");

        messages.push(ChatMessage::model(first.text.clone(), first.calls.clone()));
        messages.push(ChatMessage::function(&first.calls[0], "1. a | b | c"));
        let second = chat.complete(&messages, &[]).unwrap();
        assert_eq!(second.calls[0].name, "answer");

        messages.push(ChatMessage::model(second.text, second.calls));
        let err = chat.complete(&messages, &[]).unwrap_err();
        assert!(matches!(err, ChatError::ScriptExhausted { index: 2, .. }));
    }

    #[test]
    fn longest_matching_key_wins() {
        let chat = two_turn_script();
        let msg = |q: &str| vec![ChatMessage::user(q.to_string())];
        let reply = chat
            .complete(&msg("what is the capital of France?"), &[])
            .unwrap();
        assert_eq!(reply.text, "specific turn");
        let reply = chat.complete(&msg("capital of Norway"), &[]).unwrap();
        assert_eq!(reply.text, "capital turn");
        let reply = chat.complete(&msg("unrelated"), &[]).unwrap();
        assert_eq!(reply.text, "thinking");
    }

    #[test]
    fn fresh_conversation_restarts_the_count() {
        let chat = two_turn_script();
        let main = vec![
            ChatMessage::user("Question: anything"),
            ChatMessage::model("thinking", vec![]),
        ];
        let fresh = vec![ChatMessage::user("capital of France please")];
        // The main conversation is on turn one; a fresh one is on zero.
        assert_eq!(chat.complete(&main, &[]).unwrap().calls[0].name, "answer");
        assert_eq!(chat.complete(&fresh, &[]).unwrap().text, "specific turn");
    }

    #[test]
    fn scripted_id_names_the_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, r#"{"default": []}"#).unwrap();
        let chat = ScriptedChat::load(&path).unwrap();
        assert!(chat.model_id().starts_with("scripted:"));
        assert!(chat.model_id().ends_with("script.json"));
    }

    #[test]
    fn factory_selects_scripted_models() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, r#"{"default": [{"text": "hello"}]}"#).unwrap();
        let model = format!("scripted:{}", path.display());
        let client = chat_client(None, Some(&model)).unwrap();
        let reply = client
            .complete(&[ChatMessage::user("hi")], &[])
            .unwrap();
        assert_eq!(reply.text, "hello");
    }

    #[test]
    fn factory_requires_a_url_for_http_models() {
        let config = ChatConfig {
            url: None,
            model: "gpt-x".to_string(),
            api_key_env: None,
        };
        assert!(matches!(
            chat_client(Some(&config), None),
            Err(ChatError::Config(_))
        ));
        assert!(matches!(chat_client(None, None), Err(ChatError::Config(_))));
    }

    #[test]
    fn http_round_trip_with_tool_calls() {
        let completion = r#"{
            "choices": [{"message": {
                "role": "assistant",
                "content": "searching now",
                "tool_calls": [{
                    "id": "abc",
                    "type": "function",
                    "function": {"name": "search_entity",
                                 "arguments": "{\"kg\": \"g\", \"query\": \"cat\"}"}
                }]
            }}]
        }"#;
        let fixture = FixtureEndpoint::start(vec![FixtureRule::json("", completion)]);
        let chat = HttpChat::new(fixture.url(), "test-model").with_api_key("secret");
        let specs = function_specs();
        let messages = vec![
            ChatMessage::system("rules"),
            ChatMessage::user("find the cat"),
            ChatMessage::model(
                "ok",
                vec![FunctionCall {
                    id: "prev".to_string(),
                    name: "list".to_string(),
                    arguments: serde_json::json!({"kg": "g"}),
                }],
            ),
            ChatMessage::function(
                &FunctionCall {
                    id: "prev".to_string(),
                    name: "list".to_string(),
                    arguments: Value::Null,
                },
                "1. a | b | c",
            ),
        ];
        let reply = chat.complete(&messages, &specs).unwrap();
        assert_eq!(reply.text, "searching now");
        assert_eq!(reply.calls.len(), 1);
        assert_eq!(reply.calls[0].name, "search_entity");
        assert_eq!(reply.calls[0].id, "abc");
        assert_eq!(reply.calls[0].arguments["query"], "cat");

        let sent = fixture.requests().pop().unwrap();
        let body: Value = serde_json::from_str(&sent).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][2]["tool_calls"][0]["id"], "prev");
        assert_eq!(body["messages"][3]["role"], "tool");
        assert_eq!(body["messages"][3]["tool_call_id"], "prev");
        assert_eq!(body["tools"].as_array().unwrap().len(), 12);
        assert_eq!(body["tools"][0]["type"], "function");
    }

    #[test]
    fn http_retries_server_errors_then_gives_up() {
        let fixture =
            FixtureEndpoint::start(vec![FixtureRule::status("", 500, "overloaded")]);
        let chat = HttpChat::new(fixture.url(), "m").with_backoff(Duration::from_millis(1));
        let err = chat
            .complete(&[ChatMessage::user("q")], &[])
            .unwrap_err();
        assert!(matches!(err, ChatError::Transport(_)));
        assert!(err.to_string().contains("3 attempts"));
        assert_eq!(fixture.request_count(), 3);
    }

    #[test]
    fn http_client_errors_fail_fast() {
        let fixture = FixtureEndpoint::start(vec![FixtureRule::status("", 400, "bad request")]);
        let chat = HttpChat::new(fixture.url(), "m").with_backoff(Duration::from_millis(1));
        let err = chat.complete(&[ChatMessage::user("q")], &[]).unwrap_err();
        assert!(matches!(err, ChatError::Protocol(_)));
        assert_eq!(fixture.request_count(), 1);
    }

    #[test]
    fn unparsable_arguments_are_kept_verbatim() {
        let completion = r#"{
            "choices": [{"message": {
                "content": null,
                "tool_calls": [{
                    "id": "x",
                    "function": {"name": "execute", "arguments": "not json"}
                }]
            }}]
        }"#;
        let parsed: Value = serde_json::from_str(completion).unwrap();
        let reply = parse_completion(&parsed).unwrap();
        assert_eq!(reply.text, "");
        assert_eq!(reply.calls[0].arguments, Value::String("not json".into()));
    }
}
