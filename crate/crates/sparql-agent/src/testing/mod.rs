//! In-process HTTP fixtures for tests and runnable examples.
//!
//! `FixtureEndpoint` is a tiny canned server bound to an ephemeral
//! localhost port. Each incoming POST body is matched, after whitespace
//! normalization, against the rules in order; the first hit decides the
//! response. It speaks just enough HTTP/1.1 for a blocking client with
//! `Connection: close` semantics, which keeps it free of async runtimes.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

/// Collapse whitespace runs so that query formatting does not matter
/// when matching rules.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

enum FixtureAction {
    Json(String),
    Status(u16, String),
    Stall(Duration),
}

pub struct FixtureRule {
    pattern: String,
    action: FixtureAction,
}

impl FixtureRule {
    /// Respond 200 with a JSON body when the request contains `pattern`.
    /// An empty pattern matches every request.
    pub fn json(pattern: &str, body: &str) -> Self {
        FixtureRule {
            pattern: normalize_ws(pattern),
            action: FixtureAction::Json(body.to_string()),
        }
    }

    /// Respond with an HTTP error status and a plain-text body.
    pub fn status(pattern: &str, code: u16, body: &str) -> Self {
        FixtureRule {
            pattern: normalize_ws(pattern),
            action: FixtureAction::Status(code, body.to_string()),
        }
    }

    /// Hold the response for `delay` before answering, to provoke client
    /// timeouts.
    pub fn stall(pattern: &str, delay: Duration) -> Self {
        FixtureRule {
            pattern: normalize_ws(pattern),
            action: FixtureAction::Stall(delay),
        }
    }
}

pub struct FixtureEndpoint {
    url: String,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<String>>>,
    accept_thread: Option<JoinHandle<()>>,
}

impl FixtureEndpoint {
    pub fn start(rules: Vec<FixtureRule>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind fixture endpoint");
        let port = listener.local_addr().expect("fixture local addr").port();
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let rules = Arc::new(rules);

        let accept_stop = Arc::clone(&stop);
        let accept_requests = Arc::clone(&requests);
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let rules = Arc::clone(&rules);
                let requests = Arc::clone(&accept_requests);
                let stop = Arc::clone(&accept_stop);
                // Handlers are detached; they only ever touch the shared
                // log and each one runs for at most one stall interval.
                std::thread::spawn(move || handle(stream, &rules, &requests, &stop));
            }
        });

        FixtureEndpoint {
            url: format!("http://127.0.0.1:{port}/sparql"),
            stop,
            requests,
            accept_thread: Some(accept_thread),
        }
    }

    /// Endpoint URL to point a client at.
    pub fn url(&self) -> &str {
        &self.url
    }

    /// Raw bodies received so far, in arrival order.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().expect("fixture request log").clone()
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().expect("fixture request log").len()
    }
}

impl Drop for FixtureEndpoint {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop so it observes the flag.
        if let Some(addr) = self.url.strip_prefix("http://") {
            let addr = addr.trim_end_matches("/sparql");
            let _ = TcpStream::connect(addr);
        }
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

fn handle(
    mut stream: TcpStream,
    rules: &[FixtureRule],
    requests: &Mutex<Vec<String>>,
    stop: &AtomicBool,
) {
    let Some(body) = read_request(&mut stream) else {
        return;
    };
    requests
        .lock()
        .expect("fixture request log")
        .push(body.clone());

    let normalized = normalize_ws(&body);
    let rule = rules
        .iter()
        .find(|r| r.pattern.is_empty() || normalized.contains(&r.pattern));

    let (code, reason, content_type, payload) = match rule {
        None => (
            404,
            "Not Found",
            "text/plain",
            "no fixture rule matched".to_string(),
        ),
        Some(rule) => match &rule.action {
            FixtureAction::Json(body) => {
                (200, "OK", "application/sparql-results+json", body.clone())
            }
            FixtureAction::Status(code, body) => {
                (*code, "Error", "text/plain", body.clone())
            }
            FixtureAction::Stall(delay) => {
                // Sleep in slices so teardown never waits out a long stall.
                let mut remaining = *delay;
                let step = Duration::from_millis(50);
                while remaining > Duration::ZERO && !stop.load(Ordering::SeqCst) {
                    let nap = remaining.min(step);
                    std::thread::sleep(nap);
                    remaining = remaining.saturating_sub(nap);
                }
                (
                    200,
                    "OK",
                    "application/sparql-results+json",
                    r#"{"head":{"vars":[]},"results":{"bindings":[]}}"#.to_string(),
                )
            }
        },
    };

    let response = format!(
        "HTTP/1.1 {code} {reason}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// Read one HTTP request and return its body. Understands only
/// Content-Length framing, which is what blocking clients send here.
fn read_request(stream: &mut TcpStream) -> Option<String> {
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .ok()?;
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = find_header_end(&buf) {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    };

    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length = head
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.trim()
                .eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);

    let body_start = header_end + 4;
    while buf.len() < body_start + content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let end = (body_start + content_length).min(buf.len());
    Some(String::from_utf8_lossy(&buf[body_start..end]).to_string())
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

/// A ready-made empty SELECT response.
pub fn empty_select_json(vars: &[&str]) -> String {
    let vars: Vec<String> = vars.iter().map(|v| format!("\"{v}\"")).collect();
    format!(
        r#"{{"head":{{"vars":[{}]}},"results":{{"bindings":[]}}}}"#,
        vars.join(",")
    )
}

/// Build a SELECT response from rows of `(variable, type, value)` term
/// triples, one inner vec per result row.
pub fn select_json(vars: &[&str], rows: &[Vec<(&str, &str, &str)>]) -> String {
    let mut bindings = Vec::new();
    for row in rows {
        let mut terms = Vec::new();
        for (var, kind, value) in row {
            let value = value.replace('\\', "\\\\").replace('"', "\\\"");
            terms.push(format!(
                r#""{var}":{{"type":"{kind}","value":"{value}"}}"#
            ));
        }
        bindings.push(format!("{{{}}}", terms.join(",")));
    }
    let vars: Vec<String> = vars.iter().map(|v| format!("\"{v}\"")).collect();
    format!(
        r#"{{"head":{{"vars":[{}]}},"results":{{"bindings":[{}]}}}}"#,
        vars.join(","),
        bindings.join(",")
    )
}

/// An ASK response.
pub fn ask_json(value: bool) -> String {
    format!(r#"{{"head":{{}},"boolean":{value}}}"#)
}

/// A small fixed knowledge graph for tests and runnable examples: a
/// handful of well-known entities and properties under Wikidata-style
/// IRIs, plus question-query example pairs. The graph is registered
/// under the name `test`.
pub mod demo {
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    use crate::catalog::{ItemKind, ItemRecord, KnowledgeGraphConfig};
    use crate::keyword::KeywordIndex;
    use crate::prefix::PrefixTable;
    use crate::sparql::SparqlClient;
    use crate::store::{ExamplePair, ExampleStore};
    use crate::toolbox::{GraphResources, Toolbox};
    use crate::vector::{HashEmbedding, VectorIndex};

    pub const ENTITY_BASE: &str = "http://www.wikidata.org/entity/";
    pub const PROPERTY_BASE: &str = "http://www.wikidata.org/prop/direct/";
    pub const GRAPH: &str = "test";

    fn entity(local: &str, label: &str, score: u32, infos: &[&str]) -> ItemRecord {
        ItemRecord {
            iri: format!("{ENTITY_BASE}{local}"),
            label: label.to_string(),
            score,
            synonyms: Vec::new(),
            infos: infos.iter().map(|s| s.to_string()).collect(),
            kind: ItemKind::Entity,
        }
    }

    fn property(local: &str, label: &str, score: u32) -> ItemRecord {
        ItemRecord {
            iri: format!("{PROPERTY_BASE}{local}"),
            label: label.to_string(),
            score,
            synonyms: Vec::new(),
            infos: Vec::new(),
            kind: ItemKind::Property,
        }
    }

    pub fn entities() -> Vec<ItemRecord> {
        vec![
            entity("Q42", "Douglas Adams", 500, &["English writer"]),
            entity("Q5", "human", 900, &[]),
            entity("Q1860", "English", 400, &["language"]),
            entity("Q146", "house cat", 300, &["domesticated feline"]),
            entity(
                "Q17989863",
                "governor of Ohio",
                50,
                &["head of state government"],
            ),
            entity("Q3priv", "red apple", 10, &[]),
        ]
    }

    pub fn properties() -> Vec<ItemRecord> {
        vec![
            property("P31", "instance of", 800),
            property("P69", "educated at", 200),
            property("P106", "occupation", 300),
        ]
    }

    pub fn example_pairs() -> Vec<ExamplePair> {
        vec![
            ExamplePair {
                question: "Who wrote The Hitchhiker's Guide to the Galaxy?".to_string(),
                sparql: format!("SELECT ?a WHERE {{ ?a <{PROPERTY_BASE}P50> ?b }}"),
                kg: GRAPH.to_string(),
            },
            ExamplePair {
                question: "How many humans are there?".to_string(),
                sparql: format!(
                    "SELECT (COUNT(?h) AS ?n) WHERE {{ ?h <{PROPERTY_BASE}P31> <{ENTITY_BASE}Q5> }}"
                ),
                kg: GRAPH.to_string(),
            },
            ExamplePair {
                question: "Where was Douglas Adams educated?".to_string(),
                sparql: format!(
                    "SELECT ?u WHERE {{ <{ENTITY_BASE}Q42> <{PROPERTY_BASE}P69> ?u }}"
                ),
                kg: GRAPH.to_string(),
            },
            ExamplePair {
                question: "List all cats".to_string(),
                sparql: format!("SELECT ?c WHERE {{ ?c <{PROPERTY_BASE}P31> <{ENTITY_BASE}Q146> }}"),
                kg: GRAPH.to_string(),
            },
        ]
    }

    pub fn prefixes() -> PrefixTable {
        PrefixTable::from_pairs(vec![("wd", ENTITY_BASE), ("wdt", PROPERTY_BASE)])
    }

    /// A fully indexed toolbox over the demo corpus, querying `endpoint`.
    pub fn toolbox(endpoint: &str) -> Toolbox {
        let provider = HashEmbedding::default();
        let config = KnowledgeGraphConfig {
            name: GRAPH.to_string(),
            endpoint: endpoint.to_string(),
            prefixes: prefixes(),
            entity_data_path: None,
            property_data_path: None,
            example_store_path: None,
            headers: Default::default(),
        };
        let property_index = VectorIndex::build(properties(), &provider, 256)
            .expect("demo property index");
        let property_meta = property_index
            .items()
            .iter()
            .map(|r| (r.iri.clone(), (r.score, r.label.clone())))
            .collect();
        let example_index =
            VectorIndex::build(example_pairs(), &provider, 256).expect("demo example index");
        let graph = GraphResources {
            client: SparqlClient::for_graph(&config),
            config,
            entities: Some(Box::new(KeywordIndex::build(entities()))),
            properties: Some(property_index),
            property_meta,
            examples: Some(ExampleStore::from_index(example_index)),
        };
        Toolbox {
            graphs: [(GRAPH.to_string(), graph)].into_iter().collect(),
            provider: Box::new(HashEmbedding::default()),
        }
    }

    /// The deterministic generator used wherever demo sessions need
    /// randomness.
    pub fn rng() -> StdRng {
        StdRng::seed_from_u64(7)
    }

    /// Canned responses for every query shape the bundled dataset and
    /// chat scripts under `data/` send at a demo-style graph. Patterns
    /// match property ids, so both prefixed and absolute spellings hit
    /// the same rule. The trailing catch-all keeps unexpected queries
    /// from failing a whole run.
    pub fn endpoint_rules() -> Vec<super::FixtureRule> {
        use super::{ask_json, empty_select_json, select_json, FixtureRule};
        vec![
            FixtureRule::json("ASK {", &ask_json(true)),
            FixtureRule::json(
                "P69",
                &select_json(
                    &["u"],
                    &[vec![("u", "uri", "http://www.wikidata.org/entity/Q691283")]],
                ),
            ),
            FixtureRule::json("COUNT(?h)", &select_json(&["n"], &[vec![("n", "literal", "3")]])),
            FixtureRule::json(
                "Q146",
                &select_json(
                    &["c"],
                    &[
                        vec![("c", "uri", "http://www.wikidata.org/entity/Q378619")],
                        vec![("c", "uri", "http://www.wikidata.org/entity/Q677525")],
                    ],
                ),
            ),
            FixtureRule::json(
                "P6886",
                &select_json(
                    &["l"],
                    &[vec![("l", "uri", "http://www.wikidata.org/entity/Q1860")]],
                ),
            ),
            FixtureRule::json(
                "P103",
                &select_json(
                    &["l"],
                    &[vec![("l", "uri", "http://www.wikidata.org/entity/Q150")]],
                ),
            ),
            FixtureRule::json("P2052", &select_json(&["v"], &[vec![("v", "literal", "11")]])),
            FixtureRule::json("P569", &empty_select_json(&["h"])),
            FixtureRule::json("", &empty_select_json(&["x"])),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparql::{QueryErrorKind, SparqlClient};

    #[test]
    fn serves_matched_rule() {
        let server = FixtureEndpoint::start(vec![
            FixtureRule::json(
                "?s ?p ?o",
                &select_json(&["s"], &[vec![("s", "uri", "http://example.org/x")]]),
            ),
            FixtureRule::status("", 500, "unmatched"),
        ]);
        let client = SparqlClient::new(server.url());
        let table = client
            .execute("SELECT ?s WHERE { ?s ?p ?o } LIMIT 1")
            .unwrap();
        assert_eq!(table.total_rows, 1);
        assert_eq!(server.request_count(), 1);
    }

    #[test]
    fn rules_match_in_order_with_normalized_whitespace() {
        let server = FixtureEndpoint::start(vec![
            FixtureRule::json("ASK   {", &ask_json(true)),
            FixtureRule::json("", &empty_select_json(&["s"])),
        ]);
        let client = SparqlClient::new(server.url());
        assert_eq!(
            client.execute("ASK {\n  ?s ?p ?o\n}").unwrap().is_ask,
            Some(true)
        );
        assert!(client
            .execute("SELECT ?s WHERE { ?s ?p ?o }")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn http_error_carries_the_body_verbatim() {
        let server = FixtureEndpoint::start(vec![FixtureRule::status(
            "",
            503,
            "endpoint draining, try later",
        )]);
        let client = SparqlClient::new(server.url());
        let err = client.execute("SELECT * WHERE { ?s ?p ?o }").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::EndpointHttp);
        assert!(err.message.contains("endpoint draining, try later"));
    }

    #[test]
    fn stall_rule_trips_a_short_timeout() {
        let server = FixtureEndpoint::start(vec![FixtureRule::stall(
            "",
            Duration::from_secs(2),
        )]);
        let client =
            SparqlClient::new(server.url()).with_timeout(Duration::from_millis(200));
        let started = std::time::Instant::now();
        let err = client.execute("SELECT * WHERE { ?s ?p ?o }").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Timeout);
        assert!(started.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn unmatched_request_is_an_http_error() {
        let server = FixtureEndpoint::start(vec![FixtureRule::json(
            "never-sent-token",
            &ask_json(false),
        )]);
        let client = SparqlClient::new(server.url());
        let err = client.execute("SELECT * WHERE { ?s ?p ?o }").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::EndpointHttp);
        assert!(err.message.contains("no fixture rule matched"));
    }

    #[test]
    fn request_log_preserves_bodies() {
        let server =
            FixtureEndpoint::start(vec![FixtureRule::json("", &ask_json(true))]);
        let client = SparqlClient::new(server.url());
        client.execute("ASK { ?s ?p ?o }").unwrap();
        let log = server.requests();
        assert_eq!(log.len(), 1);
        assert!(log[0].contains("ASK { ?s ?p ?o }"));
    }
}
