//! Blocking SPARQL protocol client.
//!
//! Queries are POSTed as `application/sparql-query` and results requested
//! as `application/sparql-results+json`. Only read queries are sent; the
//! client refuses anything else before touching the network.

use std::collections::{BTreeMap, HashSet};
use std::time::Duration;

use crate::catalog::KnowledgeGraphConfig;
use crate::prefix::PrefixTable;

use super::{validate_query, Cell, QueryError, QueryErrorKind, ResultTable};

/// Per-request timeout unless overridden.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
/// Rows kept from a single response unless a caller raises the cap.
pub const DEFAULT_ROW_CAP: usize = 100_000;
/// Environment override for the timeout, in whole seconds.
pub const TIMEOUT_ENV: &str = "SPARQL_AGENT_TIMEOUT_SECS";

pub struct SparqlClient {
    endpoint: String,
    timeout: Duration,
    row_cap: usize,
    prefixes: PrefixTable,
    headers: BTreeMap<String, String>,
    http: reqwest::blocking::Client,
}

impl SparqlClient {
    /// Client for one endpoint with default timeout and row cap. The
    /// `SPARQL_AGENT_TIMEOUT_SECS` variable, when set to a positive
    /// integer, overrides the default timeout.
    pub fn new(endpoint: impl Into<String>) -> Self {
        let timeout = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
            .filter(|&secs| secs > 0)
            .map(Duration::from_secs)
            .unwrap_or(DEFAULT_TIMEOUT);
        SparqlClient {
            endpoint: endpoint.into(),
            timeout,
            row_cap: DEFAULT_ROW_CAP,
            prefixes: PrefixTable::new(),
            headers: BTreeMap::new(),
            http: reqwest::blocking::Client::new(),
        }
    }

    /// Client configured for one catalog graph: endpoint, prefix table
    /// and extra request headers are taken from the graph entry.
    pub fn for_graph(graph: &KnowledgeGraphConfig) -> Self {
        SparqlClient::new(&graph.endpoint)
            .with_prefixes(graph.prefixes.clone())
            .with_headers(graph.headers.clone())
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_row_cap(mut self, row_cap: usize) -> Self {
        self.row_cap = row_cap;
        self
    }

    /// Prefixes prepended to outgoing queries when not already declared,
    /// and used to shorten IRIs when the result is rendered.
    pub fn with_prefixes(mut self, prefixes: PrefixTable) -> Self {
        self.prefixes = prefixes;
        self
    }

    pub fn with_headers(mut self, headers: BTreeMap<String, String>) -> Self {
        self.headers = headers;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Run a read query, keeping at most the default row cap.
    pub fn execute(&self, query: &str) -> Result<ResultTable, QueryError> {
        self.execute_capped(query, self.row_cap)
    }

    /// Run a read query with an explicit row cap. Rows beyond the cap are
    /// dropped and the table is marked truncated; `total_rows` still
    /// reports the size of the full response.
    pub fn execute_capped(&self, query: &str, row_cap: usize) -> Result<ResultTable, QueryError> {
        validate_query(query)?;
        let body = prepend_prefixes(query, &self.prefixes);

        let mut request = self
            .http
            .post(&self.endpoint)
            .timeout(self.timeout)
            .header("Content-Type", "application/sparql-query")
            .header("Accept", "application/sparql-results+json")
            .body(body);
        for (name, value) in &self.headers {
            request = request.header(name, value);
        }

        let response = request.send().map_err(|err| {
            if err.is_timeout() {
                QueryError::new(
                    QueryErrorKind::Timeout,
                    format!("no response within {}s", self.timeout.as_secs_f64()),
                )
            } else {
                QueryError::new(
                    QueryErrorKind::EndpointHttp,
                    format!("request to {} failed: {err}", self.endpoint),
                )
            }
        })?;

        let status = response.status();
        let text = response.text().map_err(|err| {
            if err.is_timeout() {
                QueryError::new(
                    QueryErrorKind::Timeout,
                    format!("no response within {}s", self.timeout.as_secs_f64()),
                )
            } else {
                QueryError::new(QueryErrorKind::EndpointHttp, err.to_string())
            }
        })?;

        if status.as_u16() >= 400 {
            // The endpoint's own words are the most useful diagnostic, so
            // the body is passed through untouched.
            let detail = if text.trim().is_empty() {
                status.to_string()
            } else {
                format!("{status}: {text}")
            };
            return Err(QueryError::new(QueryErrorKind::EndpointHttp, detail));
        }

        let mut table = parse_results(&text)?;
        if table.rows.len() > row_cap {
            table.rows.truncate(row_cap);
            table.truncated = true;
        }
        table.prefixes = self.prefixes.clone();
        Ok(table)
    }
}

/// Names already declared in the query's prologue.
fn declared_prefixes(query: &str) -> HashSet<String> {
    let mut found = HashSet::new();
    let lower = query.to_lowercase();
    let mut from = 0;
    while let Some(at) = lower[from..].find("prefix") {
        let at = from + at;
        from = at + "prefix".len();
        let rest = &query[from..];
        let name: String = rest
            .trim_start()
            .chars()
            .take_while(|&c| c != ':' && !c.is_whitespace())
            .collect();
        if rest.trim_start()[name.len()..].starts_with(':') {
            found.insert(name);
        }
    }
    found
}

/// Prepend declarations for every table prefix the query does not
/// already declare, in table order.
pub fn prepend_prefixes(query: &str, prefixes: &PrefixTable) -> String {
    let declared = declared_prefixes(query);
    let mut block = String::new();
    for (name, base) in prefixes.iter() {
        if !declared.contains(name) {
            block.push_str(&format!("PREFIX {name}: <{base}>\n"));
        }
    }
    if block.is_empty() {
        query.to_string()
    } else {
        format!("{block}{query}")
    }
}

/// Parse a SPARQL 1.1 JSON results document into a table.
pub fn parse_results(text: &str) -> Result<ResultTable, QueryError> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|err| {
        QueryError::new(
            QueryErrorKind::Parse,
            format!("response is not valid JSON: {err}"),
        )
    })?;

    if let Some(answer) = doc.get("boolean") {
        let value = answer.as_bool().ok_or_else(|| {
            QueryError::new(QueryErrorKind::Parse, "boolean field is not a bool")
        })?;
        return Ok(ResultTable::ask(value));
    }

    let variables: Vec<String> = doc
        .get("head")
        .and_then(|h| h.get("vars"))
        .and_then(|v| v.as_array())
        .map(|vars| {
            vars.iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default();

    let bindings = doc
        .get("results")
        .and_then(|r| r.get("bindings"))
        .and_then(|b| b.as_array())
        .ok_or_else(|| {
            QueryError::new(
                QueryErrorKind::Parse,
                "response has neither a boolean nor results.bindings",
            )
        })?;

    let mut rows = Vec::with_capacity(bindings.len());
    for binding in bindings {
        let mut row = Vec::with_capacity(variables.len());
        for var in &variables {
            row.push(match binding.get(var) {
                None => Cell::Unbound,
                Some(term) => parse_term(term)?,
            });
        }
        rows.push(row);
    }
    Ok(ResultTable::select(variables, rows))
}

fn parse_term(term: &serde_json::Value) -> Result<Cell, QueryError> {
    let kind = term.get("type").and_then(|t| t.as_str()).ok_or_else(|| {
        QueryError::new(QueryErrorKind::Parse, "binding term is missing its type")
    })?;
    let value = term
        .get("value")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            QueryError::new(QueryErrorKind::Parse, "binding term is missing its value")
        })?
        .to_string();
    Ok(match kind {
        "uri" => Cell::Iri { iri: value },
        "bnode" => Cell::Blank { id: value },
        "literal" | "typed-literal" => Cell::Literal {
            lexical: value,
            datatype: term
                .get("datatype")
                .and_then(|d| d.as_str())
                .map(str::to_string),
            lang: term
                .get("xml:lang")
                .and_then(|l| l.as_str())
                .map(str::to_string),
        },
        other => {
            return Err(QueryError::new(
                QueryErrorKind::Parse,
                format!("unknown binding term type {other:?}"),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_select_results() {
        let text = r#"{
            "head": {"vars": ["s", "n"]},
            "results": {"bindings": [
                {"s": {"type": "uri", "value": "http://example.org/a"},
                 "n": {"type": "literal", "value": "5",
                       "datatype": "http://www.w3.org/2001/XMLSchema#integer"}},
                {"s": {"type": "bnode", "value": "b0"}}
            ]}
        }"#;
        let table = parse_results(text).unwrap();
        assert_eq!(table.variables, vec!["s", "n"]);
        assert_eq!(table.total_rows, 2);
        assert_eq!(
            table.rows[0][0],
            Cell::Iri {
                iri: "http://example.org/a".into()
            }
        );
        assert_eq!(table.rows[1][1], Cell::Unbound);
        assert_eq!(table.is_ask, None);
    }

    #[test]
    fn parses_ask_results() {
        let table = parse_results(r#"{"head": {}, "boolean": true}"#).unwrap();
        assert_eq!(table.is_ask, Some(true));
        assert!(table.rows.is_empty());
    }

    #[test]
    fn garbage_is_a_parse_error() {
        let err = parse_results("<html>busy</html>").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Parse);
    }

    #[test]
    fn missing_bindings_is_a_parse_error() {
        let err = parse_results(r#"{"head": {"vars": []}}"#).unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Parse);
    }

    #[test]
    fn language_tag_is_kept() {
        let text = r#"{
            "head": {"vars": ["l"]},
            "results": {"bindings": [
                {"l": {"type": "literal", "value": "Haus", "xml:lang": "de"}}
            ]}
        }"#;
        let table = parse_results(text).unwrap();
        assert_eq!(
            table.rows[0][0],
            Cell::Literal {
                lexical: "Haus".into(),
                datatype: None,
                lang: Some("de".into()),
            }
        );
    }

    #[test]
    fn prepends_only_missing_prefixes() {
        let prefixes = PrefixTable::from_pairs(vec![
            ("wd", "http://www.wikidata.org/entity/"),
            ("wdt", "http://www.wikidata.org/prop/direct/"),
        ]);
        let query = "PREFIX wd: <http://www.wikidata.org/entity/>\nSELECT ?s WHERE { ?s wdt:P31 wd:Q5 }";
        let out = prepend_prefixes(query, &prefixes);
        assert!(out.starts_with("PREFIX wdt: <http://www.wikidata.org/prop/direct/>\n"));
        assert_eq!(out.matches("PREFIX wd:").count(), 1);
    }

    #[test]
    fn prefix_block_is_sorted_by_name() {
        let prefixes = PrefixTable::from_pairs(vec![
            ("z", "http://example.org/z/"),
            ("a", "http://example.org/a/"),
        ]);
        let out = prepend_prefixes("SELECT * WHERE { ?s ?p ?o }", &prefixes);
        let a = out.find("PREFIX a:").unwrap();
        let z = out.find("PREFIX z:").unwrap();
        assert!(a < z);
    }

    #[test]
    fn empty_table_leaves_query_untouched() {
        let query = "ASK { ?s ?p ?o }";
        assert_eq!(prepend_prefixes(query, &PrefixTable::new()), query);
    }

    #[test]
    fn default_constants() {
        assert_eq!(DEFAULT_TIMEOUT, Duration::from_secs(60));
        assert_eq!(DEFAULT_ROW_CAP, 100_000);
    }
}
