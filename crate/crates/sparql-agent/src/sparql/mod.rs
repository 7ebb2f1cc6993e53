//! SPARQL execution over HTTP and bounded text rendering of results.
//!
//! [`SparqlClient`] speaks the SPARQL 1.1 protocol (POST, JSON results)
//! against any conformant endpoint. Results are materialized into
//! [`ResultTable`]s with a hard row cap, and [`render_table`] turns a
//! table into the bounded text the model sees: at most the first five and
//! last five rows and columns.

mod client;
mod render;

pub use client::{SparqlClient, DEFAULT_ROW_CAP, DEFAULT_TIMEOUT};
pub use render::render_table;
pub(crate) use render::shorten_iri;

use serde::{Deserialize, Serialize};

use crate::prefix::PrefixTable;

/// One cell of a SPARQL result row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Cell {
    /// Absolute IRI.
    Iri { iri: String },
    Literal {
        lexical: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lang: Option<String>,
    },
    Blank { id: String },
    Unbound,
}

impl Cell {
    pub fn iri(iri: impl Into<String>) -> Self {
        Cell::Iri { iri: iri.into() }
    }

    pub fn literal(lexical: impl Into<String>) -> Self {
        Cell::Literal {
            lexical: lexical.into(),
            datatype: None,
            lang: None,
        }
    }

    pub fn typed_literal(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Cell::Literal {
            lexical: lexical.into(),
            datatype: Some(datatype.into()),
            lang: None,
        }
    }
}

/// A materialized SPARQL result.
///
/// `total_rows`/`total_cols` count the full result before any
/// truncation; `rows` holds at most the materialization cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub variables: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub total_rows: usize,
    pub total_cols: usize,
    pub truncated: bool,
    /// `Some(b)` when the query was an ASK with result `b`.
    pub is_ask: Option<bool>,
    /// Prefix table used to shorten IRIs when rendering.
    #[serde(default)]
    pub prefixes: PrefixTable,
}

impl ResultTable {
    /// A SELECT-shaped table over the given variables and rows.
    pub fn select(variables: Vec<String>, rows: Vec<Vec<Cell>>) -> Self {
        let total_rows = rows.len();
        let total_cols = variables.len();
        Self {
            variables,
            rows,
            total_rows,
            total_cols,
            truncated: false,
            is_ask: None,
            prefixes: PrefixTable::new(),
        }
    }

    /// An ASK result.
    pub fn ask(value: bool) -> Self {
        Self {
            variables: Vec::new(),
            rows: Vec::new(),
            total_rows: 0,
            total_cols: 0,
            truncated: false,
            is_ask: Some(value),
            prefixes: PrefixTable::new(),
        }
    }

    pub fn with_prefixes(mut self, prefixes: PrefixTable) -> Self {
        self.prefixes = prefixes;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Why a query did not produce a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryErrorKind {
    Timeout,
    EndpointHttp,
    Parse,
    MalformedQuery,
}

impl std::fmt::Display for QueryErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            QueryErrorKind::Timeout => "timeout",
            QueryErrorKind::EndpointHttp => "endpoint_http",
            QueryErrorKind::Parse => "parse",
            QueryErrorKind::MalformedQuery => "malformed_query",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryError {
    pub kind: QueryErrorKind,
    /// Verbatim endpoint message when available; never empty.
    pub message: String,
}

impl QueryError {
    pub fn new(kind: QueryErrorKind, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.is_empty() {
            message = "unspecified error".to_string();
        }
        Self { kind, message }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(QueryErrorKind::MalformedQuery, message)
    }
}

impl std::fmt::Display for QueryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for QueryError {}

/// Leading-keyword classification of a query, after comments and the
/// PREFIX/BASE prologue are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryForm {
    Select,
    Ask,
    Other,
}

/// Strip `#` comments. A `#` inside a quoted string or an `<...>` IRI is
/// kept.
pub(crate) fn strip_comments(sparql: &str) -> String {
    let mut out = String::with_capacity(sparql.len());
    let mut chars = sparql.chars().peekable();
    let mut in_quote: Option<char> = None;
    let mut in_iri = false;
    while let Some(c) = chars.next() {
        match in_quote {
            Some(q) => {
                out.push(c);
                if c == '\\' {
                    if let Some(next) = chars.next() {
                        out.push(next);
                    }
                } else if c == q {
                    in_quote = None;
                }
            }
            None if in_iri => {
                out.push(c);
                if c == '>' {
                    in_iri = false;
                }
            }
            None => match c {
                '"' | '\'' => {
                    in_quote = Some(c);
                    out.push(c);
                }
                '<' => {
                    in_iri = true;
                    out.push(c);
                }
                '#' => {
                    for next in chars.by_ref() {
                        if next == '\n' {
                            out.push('\n');
                            break;
                        }
                    }
                }
                _ => out.push(c),
            },
        }
    }
    out
}

/// Classify by the first keyword after the prologue.
pub fn classify_query(sparql: &str) -> QueryForm {
    let text = strip_comments(sparql);
    let mut rest = text.trim_start();
    loop {
        let lower = rest.to_ascii_lowercase();
        if lower.starts_with("prefix") {
            // skip "PREFIX name: <iri>"
            match rest.find('>') {
                Some(pos) => rest = rest[pos + 1..].trim_start(),
                None => return QueryForm::Other,
            }
        } else if lower.starts_with("base") {
            match rest.find('>') {
                Some(pos) => rest = rest[pos + 1..].trim_start(),
                None => return QueryForm::Other,
            }
        } else {
            break;
        }
    }
    let keyword: String = rest
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_lowercase();
    match keyword.as_str() {
        "select" => QueryForm::Select,
        "ask" => QueryForm::Ask,
        _ => QueryForm::Other,
    }
}

/// Light client-side validation: non-empty, balanced braces, and a
/// SELECT/ASK form. Update and other query forms are rejected here rather
/// than sent to the endpoint.
pub fn validate_query(sparql: &str) -> Result<QueryForm, QueryError> {
    if sparql.trim().is_empty() {
        return Err(QueryError::malformed("empty query"));
    }
    let stripped = strip_comments(sparql);
    let mut depth = 0i64;
    let mut in_quote: Option<char> = None;
    let mut in_iri = false;
    for c in stripped.chars() {
        match in_quote {
            Some(q) => {
                if c == q {
                    in_quote = None;
                }
            }
            None if in_iri => {
                if c == '>' {
                    in_iri = false;
                }
            }
            None => match c {
                '"' | '\'' => in_quote = Some(c),
                '<' => in_iri = true,
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(QueryError::malformed("unbalanced braces"));
                    }
                }
                _ => {}
            },
        }
    }
    if depth != 0 {
        return Err(QueryError::malformed("unbalanced braces"));
    }
    match classify_query(sparql) {
        QueryForm::Select => Ok(QueryForm::Select),
        QueryForm::Ask => Ok(QueryForm::Ask),
        QueryForm::Other => Err(QueryError::malformed(
            "only SELECT and ASK queries are supported",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_basic_forms() {
        assert_eq!(classify_query("SELECT ?x WHERE { }"), QueryForm::Select);
        assert_eq!(classify_query("  ask { ?s ?p ?o }"), QueryForm::Ask);
        assert_eq!(
            classify_query("PREFIX wd: <http://w/> SELECT ?x WHERE { }"),
            QueryForm::Select
        );
        assert_eq!(
            classify_query("# comment\nSELECT ?x WHERE { }"),
            QueryForm::Select
        );
        assert_eq!(classify_query("INSERT DATA { }"), QueryForm::Other);
        assert_eq!(classify_query("CONSTRUCT { } WHERE { }"), QueryForm::Other);
    }

    #[test]
    fn validate_rejects_unbalanced() {
        assert!(validate_query("SELECT ?x WHERE { { }").is_err());
        assert!(validate_query("SELECT ?x WHERE } {").is_err());
        assert!(validate_query("SELECT ?x WHERE { \"}\" }").is_ok());
    }

    #[test]
    fn validate_rejects_updates() {
        let err = validate_query("DELETE WHERE { ?s ?p ?o }").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::MalformedQuery);
    }

    #[test]
    fn comment_stripping_keeps_iris() {
        let q = "SELECT ?x WHERE { ?x <http://example.org/ns#p> ?y } # trailing";
        assert_eq!(classify_query(q), QueryForm::Select);
        assert!(validate_query(q).is_ok());
    }
}
