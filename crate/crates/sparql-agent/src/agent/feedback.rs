//! Answer review: a second opinion before a session commits.
//!
//! The finished attempt (question, final query, its execution result)
//! is judged in a fresh single-exchange conversation with the same
//! model, which sees only the query rules and the attempt, not the
//! session history. The verdict is JSON; anything unparsable counts as
//! approval, so a confused reviewer can never wedge a session.

use serde::Deserialize;

use crate::agent::chat::{ChatClient, ChatMessage};
use crate::agent::instruction::QUERY_RULES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackStatus {
    /// Good enough, commit the answer.
    Done,
    /// Close, adjust the query.
    Refine,
    /// Wrong approach, start over.
    Retry,
}

impl FeedbackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackStatus::Done => "done",
            FeedbackStatus::Refine => "refine",
            FeedbackStatus::Retry => "retry",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackVerdict {
    pub status: FeedbackStatus,
    pub message: String,
}

/// The attempt under review.
pub struct ReviewInput<'a> {
    pub question: &'a str,
    pub kg: &'a str,
    pub sparql: Option<&'a str>,
    /// Present when the session gave up instead of answering.
    pub explanation: Option<&'a str>,
    /// Rendered result of executing the proposed query.
    pub execution: Option<&'a str>,
}

pub fn review_system_message() -> String {
    format!(
        "You check whether SPARQL queries faithfully answer questions. \
         Hold them to these rules.\n\n{QUERY_RULES}"
    )
}

pub fn review_prompt(input: &ReviewInput) -> String {
    let mut text = String::from(
        "You are reviewing a finished attempt to answer a question with a SPARQL query. \
         Decide whether it is good enough to submit.\n",
    );
    text.push_str(&format!("The question was: {}\n", input.question));
    text.push_str(&format!("Knowledge graph: {}\n", input.kg));
    if let Some(explanation) = input.explanation {
        text.push_str(&format!(
            "The attempt was abandoned with this explanation: {explanation}\n"
        ));
    }
    match input.sparql {
        Some(sparql) => text.push_str(&format!("Proposed SPARQL:\n{sparql}\n")),
        None => text.push_str("No query was produced.\n"),
    }
    if let Some(execution) = input.execution {
        text.push_str(&format!("\nExecution result:\n{execution}\n"));
    }
    text.push_str(
        "\nReply with one JSON object and nothing else: \
         {\"status\": \"...\", \"message\": \"...\"}, where status is \"done\" if the query \
         answers the question, \"refine\" if it is close but needs adjustment, or \"retry\" \
         if the approach is wrong and should start over. In message, say what to change \
         unless the status is done.",
    );
    text
}

#[derive(Deserialize)]
struct RawVerdict {
    status: String,
    #[serde(default)]
    message: String,
}

/// Extract a verdict from model text. The JSON object may be embedded
/// in prose; the outermost braces are taken.
pub fn parse_verdict(text: &str) -> Option<FeedbackVerdict> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    let raw: RawVerdict = serde_json::from_str(&text[start..=end]).ok()?;
    let status = match raw.status.trim().to_lowercase().as_str() {
        "done" => FeedbackStatus::Done,
        "refine" => FeedbackStatus::Refine,
        "retry" => FeedbackStatus::Retry,
        _ => return None,
    };
    Some(FeedbackVerdict {
        status,
        message: raw.message,
    })
}

/// Run one review exchange. Chat failures and unparsable replies fail
/// open to `done` so review can only ever add work, not block it.
pub fn review(chat: &dyn ChatClient, input: &ReviewInput) -> FeedbackVerdict {
    let messages = vec![
        ChatMessage::system(review_system_message()),
        ChatMessage::user(review_prompt(input)),
    ];
    let reply = match chat.complete(&messages, &[]) {
        Ok(reply) => reply,
        Err(e) => {
            log::warn!("answer review failed, accepting the attempt: {e}");
            return FeedbackVerdict {
                status: FeedbackStatus::Done,
                message: String::new(),
            };
        }
    };
    parse_verdict(&reply.text).unwrap_or_else(|| {
        log::warn!("unparsable review verdict, accepting the attempt: {}", reply.text);
        FeedbackVerdict {
            status: FeedbackStatus::Done,
            message: String::new(),
        }
    })
}
