//! A knowledge-graph-agnostic engine that turns natural-language questions
//! into SPARQL queries by letting a tool-calling language model iteratively
//! search and query an RDF endpoint.
//!
//! The crate is organized around the pieces such an agent needs:
//!
//! - [`catalog`]: per-graph configuration (endpoint, prefixes, data paths)
//!   and the tab-separated index source data.
//! - [`sparql`]: an HTTP client for SPARQL 1.1 endpoints plus bounded
//!   text rendering of result tables.
//! - [`keyword`]: a prefix-keyword index over entity records, scoring by
//!   exact and prefix token matches with popularity tie-breaks.
//! - [`vector`]: exact cosine-similarity search over property records and
//!   example questions, backed by a pluggable embedding provider.
//! - [`toolbox`]: the functions the model can call (execute, list,
//!   search variants, example retrieval), with uniformly bounded output.
//! - [`agent`]: the generation loop itself — instruction building, the
//!   chat transport, function sets, feedback rounds, and the optional
//!   strict IRI guard.
//! - [`eval`]: row-assignment F1 scoring of predicted queries against
//!   ground truth and a seeded benchmark runner.
//! - [`testing`]: an in-process fixture SPARQL endpoint with canned
//!   responses, used by the examples and tests.
//!
//! Start with the runnable examples (`cargo run --example keyword_search`,
//! `cargo run --example scripted_session`, ...) to see the pieces in
//! action without any network access; the `sparql-agent` binary exposes
//! the same functionality as subcommands for real deployments.

pub mod agent;
pub mod catalog;
pub mod cli;
mod diskfmt;
pub mod eval;
pub mod keyword;
pub mod prefix;
pub mod sparql;
pub mod store;
pub mod testing;
pub mod toolbox;
pub mod vector;

pub use agent::{
    run_session, FewShotMode, FunctionSet, SessionConfig, SessionError, SessionOutcome,
    SessionResult, TraceEvent,
};
pub use catalog::{Catalog, ItemKind, ItemRecord, KnowledgeGraphConfig};
pub use keyword::{KeywordIndex, SearchHit};
pub use prefix::PrefixTable;
pub use sparql::{Cell, QueryError, ResultTable};
pub use vector::{EmbeddingProvider, VectorIndex};
