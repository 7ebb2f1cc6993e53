//! The function implementations behind [`Toolbox::invoke`].
//!
//! Every function renders to a bounded piece of text. Search results
//! share one line format; mixed results (IRIs and literals together)
//! are merged under one ordering so the model sees a single ranked
//! list. A search that had to give up on part of its candidate set
//! carries a trailing note instead of failing.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::rngs::StdRng;
use serde_json::{json, Value};

use crate::catalog::{ItemKind, ItemRecord};
use crate::keyword::{score_alias, tokenize, KeywordSearch, SearchResponse};
use crate::prefix::PrefixTable;
use crate::sparql::{
    classify_query, render_table, shorten_iri, strip_comments, Cell, QueryForm, ResultTable,
};
use crate::store::ExamplePair;
use crate::toolbox::{FunctionResult, GraphResources, Mnemonic, Toolbox, ToolboxError};
use crate::vector::{EmbeddingProvider, VectorError, VectorIndex};

/// One function invocation as issued by the model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FunctionCall {
    /// Transport-assigned id, echoed back with the result.
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

impl FunctionCall {
    pub fn new(name: impl Into<String>, arguments: Value) -> Self {
        FunctionCall {
            id: String::new(),
            name: name.into(),
            arguments,
        }
    }
}

/// How many results a search function returns.
const SEARCH_K: usize = 10;
/// How many example pairs the example functions return.
const EXAMPLE_K: usize = 3;
/// Triple budget of the list function.
const LIST_LIMIT: usize = 10;
/// Candidate row caps for the constrained searches. Property sets stay
/// small, entity and literal candidate sets do not.
const PROPERTY_CANDIDATE_CAP: usize = 10_000;
const OBJECT_CANDIDATE_CAP: usize = 100_000;
/// Batch size for label lookups over VALUES clauses.
const LABEL_BATCH: usize = 500;

const APPROXIMATE_NOTE: &str = "note: approximate (candidate set truncated)";
const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

/// Why a function body stopped early. `Visible` becomes the rendered
/// result so the model can react; `Fatal` aborts the session.
enum Failure {
    Visible(String),
    Fatal(ToolboxError),
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure::Visible(message)
    }
}

impl From<ToolboxError> for Failure {
    fn from(e: ToolboxError) -> Self {
        Failure::Fatal(e)
    }
}

type CallResult = Result<FunctionResult, Failure>;

impl Toolbox {
    /// Run one function call.
    ///
    /// `Ok` carries model-visible text; argument mistakes and endpoint
    /// failures are rendered there so the model can react. `Err` means
    /// the session cannot continue (a resource required by a registered
    /// graph is missing). `answer` and `cancel` terminate the session
    /// in the agent loop and have no result here.
    pub fn invoke(
        &self,
        call: &FunctionCall,
        rng: &mut StdRng,
    ) -> Result<FunctionResult, ToolboxError> {
        let args = &call.arguments;
        let Some(mnemonic) = Mnemonic::from_wire_name(&call.name) else {
            return Ok(bare_error(format!("unknown function {}", call.name)));
        };
        if matches!(mnemonic, Mnemonic::Ans | Mnemonic::Can) {
            return Ok(bare_error(format!(
                "{} ends the session and produces no function result",
                call.name
            )));
        }
        let kg = match str_arg(args, "kg") {
            Ok(v) => v,
            Err(e) => return Ok(bare_error(e)),
        };
        let Some(g) = self.graphs.get(kg) else {
            let known = self.graph_names().join(", ");
            return Ok(bare_error(format!(
                "unknown knowledge graph {kg:?}; registered graphs: {known}"
            )));
        };
        let provider = self.provider.as_ref();
        let outcome = match mnemonic {
            Mnemonic::Exe => fn_execute(g, args),
            Mnemonic::Lst => fn_list(g, args),
            Mnemonic::Sen => fn_search_entity(g, args),
            Mnemonic::Spr => fn_search_property(g, args, provider),
            Mnemonic::Spe => fn_search_property_of_entity(g, args, provider),
            Mnemonic::Sop => fn_search_object_of_property(g, args),
            Mnemonic::Sac => fn_search_autocomplete(g, args, provider),
            Mnemonic::Scn => fn_search_constrained(g, args, provider),
            Mnemonic::Fse => fn_find_similar_examples(g, args, provider),
            Mnemonic::Fex => fn_find_examples(g, rng),
            Mnemonic::Ans | Mnemonic::Can => unreachable!("handled above"),
        };
        match outcome {
            Ok(result) => Ok(result),
            Err(Failure::Visible(message)) => {
                Ok(FunctionResult::error(message, &g.config.prefixes))
            }
            Err(Failure::Fatal(e)) => Err(e),
        }
    }

    /// Controller-initiated example retrieval for few-shot priming,
    /// rendered exactly like the example functions but with a caller
    /// chosen count. `None` when the graph is unknown, has no example
    /// store, or similarity search degrades.
    pub fn render_examples_for(
        &self,
        kg: &str,
        question: Option<&str>,
        k: usize,
        rng: &mut StdRng,
    ) -> Result<Option<FunctionResult>, ToolboxError> {
        let Some(g) = self.graphs.get(kg) else {
            return Ok(None);
        };
        let Some(store) = &g.examples else {
            return Ok(None);
        };
        let pairs = match question {
            Some(q) => match store.find_similar(q, k, self.provider.as_ref()) {
                Ok(pairs) => pairs,
                Err(e) => match vector_failure(g, e) {
                    Failure::Fatal(err) => return Err(err),
                    Failure::Visible(_) => return Ok(None),
                },
            },
            None => store.sample_random(k, rng),
        };
        if pairs.is_empty() {
            return Ok(None);
        }
        Ok(Some(render_examples(g, &pairs)))
    }
}

fn bare_error(message: String) -> FunctionResult {
    FunctionResult::error(message, &PrefixTable::new())
}

fn str_arg<'a>(args: &'a Value, name: &str) -> Result<&'a str, String> {
    match args.get(name) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim()),
        Some(Value::String(_)) => Err(format!("argument {name} must not be empty")),
        Some(Value::Null) | None => Err(format!("missing required argument {name}")),
        Some(_) => Err(format!("argument {name} must be a string")),
    }
}

fn opt_str_arg<'a>(args: &'a Value, name: &str) -> Result<Option<&'a str>, String> {
    match args.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(Some(s.trim())),
        Some(Value::String(_)) => Err(format!("argument {name} must not be empty when given")),
        Some(_) => Err(format!("argument {name} must be a string")),
    }
}

/// Resolve an argument to an absolute IRI, accepting `<...>` wrapping
/// and registered prefixed names.
fn to_iri(term: &str, prefixes: &PrefixTable) -> Result<String, String> {
    let expanded = prefixes.expand(term);
    if expanded.contains("://") {
        Ok(expanded)
    } else {
        Err(format!(
            "{term:?} is not an IRI; pass an absolute IRI or a prefixed name using a registered prefix"
        ))
    }
}

fn sparql_literal(lexical: &str) -> String {
    format!("\"{}\"", lexical.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Run a query and keep at most `cap` rows; errors become model text.
fn run_query(g: &GraphResources, query: &str, cap: usize) -> Result<ResultTable, Failure> {
    g.client
        .execute_capped(query, cap)
        .map_err(|e| Failure::Visible(format!("query failed: {e}")))
}

/// The candidate set hit the cap, so ranking saw only part of it.
fn candidates_truncated(table: &ResultTable, cap: usize) -> bool {
    table.truncated || table.total_rows >= cap
}

fn require_entities<'a>(
    g: &'a GraphResources,
) -> Result<&'a (dyn KeywordSearch + Send + Sync), ToolboxError> {
    g.entities
        .as_deref()
        .ok_or_else(|| ToolboxError::MissingResource {
            kg: g.config.name.clone(),
            what: "entity index",
        })
}

fn require_properties(g: &GraphResources) -> Result<&VectorIndex<ItemRecord>, ToolboxError> {
    g.properties
        .as_ref()
        .ok_or_else(|| ToolboxError::MissingResource {
            kg: g.config.name.clone(),
            what: "property index",
        })
}

/// Convert a query-time vector error: a provider id mismatch is a
/// configuration defect, anything else is shown to the model.
fn vector_failure(g: &GraphResources, e: VectorError) -> Failure {
    match e {
        VectorError::ProviderMismatch { .. } => Failure::Fatal(ToolboxError::Resource {
            kg: g.config.name.clone(),
            problem: e.to_string(),
        }),
        other => Failure::Visible(format!("similarity search failed: {other}")),
    }
}

// ---- shared ranking ----------------------------------------------------

enum DisplayHit {
    /// An indexed item: label, infos, popularity all known.
    Item(ItemRecord),
    /// An IRI the indexes do not know.
    Bare(String),
    /// A literal value.
    Lit(String),
}

/// One ranked result under the shared ordering: score descending, then
/// popularity descending, then text ascending. Integer keyword scores
/// and cosine similarities both fit `norm`; a merge across the two
/// normalizes first.
struct Ranked {
    norm: f64,
    tie: u32,
    text: String,
    display: DisplayHit,
}

fn sort_and_take(mut hits: Vec<Ranked>, k: usize) -> Vec<Ranked> {
    hits.sort_by(|a, b| {
        b.norm
            .total_cmp(&a.norm)
            .then_with(|| b.tie.cmp(&a.tie))
            .then_with(|| a.text.cmp(&b.text))
    });
    hits.truncate(k);
    hits
}

fn keyword_hits_ranked(response: SearchResponse, scale: Option<f64>) -> Vec<Ranked> {
    response
        .hits
        .into_iter()
        .map(|hit| Ranked {
            norm: match scale {
                Some(s) => hit.match_score as f64 / s,
                None => hit.match_score as f64,
            },
            tie: hit.item.score,
            text: hit.item.iri.clone(),
            display: DisplayHit::Item(hit.item),
        })
        .collect()
}

/// Scale turning an integer keyword score into `[0, 1]`: every query
/// token can contribute at most 2.
fn keyword_scale(query_tokens: &[String]) -> f64 {
    (query_tokens.len().max(1) * 2) as f64
}

fn render_ranked(
    g: &GraphResources,
    hits: &[Ranked],
    approximate: bool,
    empty_text: &str,
) -> FunctionResult {
    if hits.is_empty() {
        let mut text = empty_text.to_string();
        if approximate {
            text.push('\n');
            text.push_str(APPROXIMATE_NOTE);
        }
        return FunctionResult::new(text, &g.config.prefixes);
    }
    let mut lines = Vec::with_capacity(hits.len() + 1);
    let mut iris = Vec::new();
    for (i, hit) in hits.iter().enumerate() {
        let rank = i + 1;
        let line = match &hit.display {
            DisplayHit::Item(item) => {
                iris.push(item.iri.clone());
                let short = shorten_iri(&item.iri, &g.config.prefixes);
                if item.infos.is_empty() {
                    format!("{rank}. {} ({short})", item.label)
                } else {
                    format!(
                        "{rank}. {} ({short}) — {}",
                        item.label,
                        item.infos.join("; ")
                    )
                }
            }
            DisplayHit::Bare(iri) => {
                iris.push(iri.clone());
                format!("{rank}. {}", shorten_iri(iri, &g.config.prefixes))
            }
            DisplayHit::Lit(lexical) => format!("{rank}. \"{lexical}\""),
        };
        lines.push(line);
    }
    if approximate {
        lines.push(APPROXIMATE_NOTE.to_string());
    }
    FunctionResult::new(lines.join("\n"), &g.config.prefixes)
        .with_structured(json!({ "iris": iris }))
}

// ---- execute -----------------------------------------------------------

fn fn_execute(g: &GraphResources, args: &Value) -> CallResult {
    let sparql = str_arg(args, "sparql")?;
    match g.client.execute(sparql) {
        Ok(table) => Ok(
            FunctionResult::new(render_table(&table), &g.config.prefixes).with_structured(json!({
                "total_rows": table.total_rows,
                "is_ask": table.is_ask,
            })),
        ),
        Err(e) => Err(Failure::Visible(format!("query failed: {e}"))),
    }
}

// ---- list --------------------------------------------------------------

fn fn_list(g: &GraphResources, args: &Value) -> CallResult {
    let parse_pos = |name: &str| -> Result<Option<String>, String> {
        match opt_str_arg(args, name)? {
            Some(term) => to_iri(term, &g.config.prefixes).map(Some),
            None => Ok(None),
        }
    };
    let subj = parse_pos("subj")?;
    let prop = parse_pos("prop")?;
    // The object may be an IRI or a plain literal.
    let obj: Option<Cell> = opt_str_arg(args, "obj")?.map(|term| {
        let expanded = g.config.prefixes.expand(term);
        if expanded.contains("://") {
            Cell::iri(expanded)
        } else {
            Cell::literal(term)
        }
    });

    let s_term = subj
        .as_ref()
        .map_or("?s".to_string(), |iri| format!("<{iri}>"));
    let p_term = prop
        .as_ref()
        .map_or("?p".to_string(), |iri| format!("<{iri}>"));
    let o_term = match &obj {
        None => "?o".to_string(),
        Some(Cell::Iri { iri }) => format!("<{iri}>"),
        Some(Cell::Literal { lexical, .. }) => sparql_literal(lexical),
        Some(_) => unreachable!("object argument is an IRI or literal"),
    };

    let mut vars = Vec::new();
    if subj.is_none() {
        vars.push("s");
    }
    if prop.is_none() {
        vars.push("p");
    }
    if obj.is_none() {
        vars.push("o");
    }

    // Fully bound pattern: an existence check.
    if vars.is_empty() {
        let query = format!("ASK {{ {s_term} {p_term} {o_term} }}");
        let table = run_query(g, &query, 1)?;
        return if table.is_ask == Some(true) {
            let triple = [
                Cell::iri(subj.expect("bound")),
                Cell::iri(prop.expect("bound")),
                obj.expect("bound"),
            ];
            Ok(FunctionResult::new(
                render_triples(g, &[triple]),
                &g.config.prefixes,
            ))
        } else {
            Ok(FunctionResult::new(
                "no triples found".to_string(),
                &g.config.prefixes,
            ))
        };
    }

    let projection: Vec<String> = vars.iter().map(|v| format!("?{v}")).collect();
    let query = format!(
        "SELECT {} WHERE {{ {s_term} {p_term} {o_term} }} LIMIT 1000",
        projection.join(" ")
    );
    let table = run_query(g, &query, 1000)?;
    if table.rows.is_empty() {
        return Ok(FunctionResult::new(
            "no triples found".to_string(),
            &g.config.prefixes,
        ));
    }

    let col = |name: &str| table.variables.iter().position(|v| v == name);
    let triples: Vec<[Cell; 3]> = table
        .rows
        .iter()
        .map(|row| {
            let from_row = |var: &str| -> Cell {
                col(var)
                    .and_then(|i| row.get(i).cloned())
                    .unwrap_or(Cell::Unbound)
            };
            let s = match &subj {
                Some(iri) => Cell::iri(iri.clone()),
                None => from_row("s"),
            };
            let p = match &prop {
                Some(iri) => Cell::iri(iri.clone()),
                None => from_row("p"),
            };
            let o = match &obj {
                Some(cell) => cell.clone(),
                None => from_row("o"),
            };
            [s, p, o]
        })
        .collect();

    let picked = diverse_selection(g, &triples, group_position(&subj, &prop, &obj));
    let chosen: Vec<[Cell; 3]> = picked.into_iter().map(|i| triples[i].clone()).collect();
    Ok(
        FunctionResult::new(render_triples(g, &chosen), &g.config.prefixes).with_structured(
            json!({ "shown": chosen.len(), "matched": table.total_rows }),
        ),
    )
}

/// Which triple position drives diversity grouping: the property when
/// unbound, else the subject, else the object.
fn group_position(subj: &Option<String>, prop: &Option<String>, obj: &Option<Cell>) -> usize {
    if prop.is_none() {
        1
    } else if subj.is_none() {
        0
    } else {
        debug_assert!(obj.is_none());
        2
    }
}

fn cell_key(cell: &Cell) -> String {
    match cell {
        Cell::Iri { iri } => iri.clone(),
        Cell::Literal { lexical, .. } => lexical.clone(),
        Cell::Blank { id } => format!("_:{id}"),
        Cell::Unbound => String::new(),
    }
}

/// Pick up to [`LIST_LIMIT`] triple indices: group by the key position,
/// order groups by popularity of the key item (descending, key
/// ascending on ties), take up to two per group, then keep cycling the
/// groups in order for any remaining budget.
fn diverse_selection(g: &GraphResources, triples: &[[Cell; 3]], key_pos: usize) -> Vec<usize> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, triple) in triples.iter().enumerate() {
        groups
            .entry(cell_key(&triple[key_pos]))
            .or_default()
            .push(i);
    }
    let score_of_key = |key: &String| -> u32 {
        let rows = &groups[key];
        match &triples[rows[0]][key_pos] {
            Cell::Iri { iri } => g.score_of(iri),
            _ => 0,
        }
    };
    let mut keys: Vec<String> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| score_of_key(b).cmp(&score_of_key(a)).then_with(|| a.cmp(b)));

    let mut picked = Vec::new();
    let mut offsets: HashMap<&String, usize> = keys.iter().map(|k| (k, 0)).collect();
    'first: for key in &keys {
        let rows = &groups[key];
        for j in 0..rows.len().min(2) {
            picked.push(rows[j]);
            offsets.insert(key, j + 1);
            if picked.len() == LIST_LIMIT {
                break 'first;
            }
        }
    }
    while picked.len() < LIST_LIMIT {
        let mut advanced = false;
        for key in &keys {
            let offset = offsets[key];
            if offset < groups[key].len() {
                picked.push(groups[key][offset]);
                offsets.insert(key, offset + 1);
                advanced = true;
                if picked.len() == LIST_LIMIT {
                    return picked;
                }
            }
        }
        if !advanced {
            break;
        }
    }
    picked
}

fn render_triples(g: &GraphResources, triples: &[[Cell; 3]]) -> String {
    triples
        .iter()
        .enumerate()
        .map(|(i, triple)| {
            let terms: Vec<String> = triple.iter().map(|c| triple_term(g, c)).collect();
            format!("{}. {}", i + 1, terms.join(" | "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn triple_term(g: &GraphResources, cell: &Cell) -> String {
    match cell {
        Cell::Iri { iri } => {
            let short = shorten_iri(iri, &g.config.prefixes);
            match g.label_of(iri) {
                Some(label) => format!("{short} ({label})"),
                None => short,
            }
        }
        Cell::Literal { lexical, .. } => format!("\"{lexical}\""),
        Cell::Blank { id } => format!("_:{id}"),
        Cell::Unbound => "-".to_string(),
    }
}

// ---- plain searches ----------------------------------------------------

fn fn_search_entity(g: &GraphResources, args: &Value) -> CallResult {
    let entities = require_entities(g)?;
    let query = str_arg(args, "query")?;
    Ok(search_entity_inner(g, entities, query))
}

fn search_entity_inner(
    g: &GraphResources,
    entities: &(dyn KeywordSearch + Send + Sync),
    query: &str,
) -> FunctionResult {
    let response = entities.search(query, SEARCH_K, None);
    let approximate = response.approximate;
    let ranked = keyword_hits_ranked(response, None);
    render_ranked(g, &ranked, approximate, "no results")
}

fn fn_search_property(
    g: &GraphResources,
    args: &Value,
    provider: &dyn EmbeddingProvider,
) -> CallResult {
    let properties = require_properties(g)?;
    let query = str_arg(args, "query")?;
    search_property_inner(g, properties, query, provider)
}

fn search_property_inner(
    g: &GraphResources,
    properties: &VectorIndex<ItemRecord>,
    query: &str,
    provider: &dyn EmbeddingProvider,
) -> CallResult {
    let response = properties
        .search_hits(query, provider, SEARCH_K, None)
        .map_err(|e| vector_failure(g, e))?;
    let ranked = keyword_hits_ranked(response, None);
    Ok(render_ranked(g, &ranked, false, "no results"))
}

// ---- property candidates (similarity plus label fallback) --------------

/// Rank property IRIs against a query: similarity for indexed ones,
/// keyword match over endpoint labels for the rest, both on a `[0, 1]`
/// scale.
fn rank_property_candidates(
    g: &GraphResources,
    query: &str,
    candidates: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Ranked>, Failure> {
    let mut indexed: HashSet<String> = HashSet::new();
    let mut unindexed: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for iri in candidates {
        if !seen.insert(iri.as_str()) {
            continue;
        }
        if g.property_meta.contains_key(iri) {
            indexed.insert(iri.clone());
        } else {
            unindexed.push(iri.clone());
        }
    }

    let mut ranked = Vec::new();
    if !indexed.is_empty() {
        let properties = g
            .properties
            .as_ref()
            .expect("indexed candidates imply an index");
        let response = properties
            .search_hits(query, provider, SEARCH_K, Some(&indexed))
            .map_err(|e| vector_failure(g, e))?;
        for hit in response.hits {
            ranked.push(Ranked {
                norm: (hit.match_score as f64).clamp(0.0, 1.0),
                tie: hit.item.score,
                text: hit.item.iri.clone(),
                display: DisplayHit::Item(hit.item),
            });
        }
    }
    if !unindexed.is_empty() {
        let labels = fetch_labels(g, &unindexed);
        let query_tokens = tokenize(query);
        let scale = keyword_scale(&query_tokens);
        for iri in unindexed {
            let best = labels
                .get(&iri)
                .into_iter()
                .flatten()
                .map(|label| score_alias(&query_tokens, &tokenize(label)))
                .max()
                .unwrap_or(0);
            let display = match labels.get(&iri).and_then(|l| l.first()) {
                Some(label) => DisplayHit::Item(ItemRecord {
                    iri: iri.clone(),
                    label: label.clone(),
                    score: 0,
                    synonyms: Vec::new(),
                    infos: Vec::new(),
                    kind: ItemKind::Property,
                }),
                None => DisplayHit::Bare(iri.clone()),
            };
            ranked.push(Ranked {
                norm: best as f64 / scale,
                tie: 0,
                text: iri,
                display,
            });
        }
    }
    Ok(sort_and_take(ranked, SEARCH_K))
}

/// rdfs:label values for IRIs the local indexes do not know. Best
/// effort: a failing batch leaves its IRIs unlabeled.
fn fetch_labels(g: &GraphResources, iris: &[String]) -> HashMap<String, Vec<String>> {
    let mut labels: HashMap<String, Vec<String>> = HashMap::new();
    for chunk in iris.chunks(LABEL_BATCH) {
        let values: Vec<String> = chunk.iter().map(|iri| format!("<{iri}>")).collect();
        let query = format!(
            "SELECT ?p ?label WHERE {{ VALUES ?p {{ {} }} ?p <{RDFS_LABEL}> ?label }} LIMIT 100000",
            values.join(" ")
        );
        let Ok(table) = g.client.execute_capped(&query, 100_000) else {
            continue;
        };
        let p_col = table.variables.iter().position(|v| v == "p");
        let label_col = table.variables.iter().position(|v| v == "label");
        let (Some(p_col), Some(label_col)) = (p_col, label_col) else {
            continue;
        };
        for row in &table.rows {
            if let (Some(Cell::Iri { iri }), Some(Cell::Literal { lexical, .. })) =
                (row.get(p_col), row.get(label_col))
            {
                labels.entry(iri.clone()).or_default().push(lexical.clone());
            }
        }
    }
    labels
}

fn fn_search_property_of_entity(
    g: &GraphResources,
    args: &Value,
    provider: &dyn EmbeddingProvider,
) -> CallResult {
    let query = str_arg(args, "query")?;
    let ent = to_iri(str_arg(args, "ent")?, &g.config.prefixes)?;
    let candidate_query =
        format!("SELECT DISTINCT ?p WHERE {{ <{ent}> ?p ?o }} LIMIT {PROPERTY_CANDIDATE_CAP}");
    let table = run_query(g, &candidate_query, PROPERTY_CANDIDATE_CAP)?;
    let candidates = iri_column(&table, "p");
    if candidates.is_empty() {
        return Ok(FunctionResult::new(
            "entity has no properties".to_string(),
            &g.config.prefixes,
        ));
    }
    let ranked = rank_property_candidates(g, query, &candidates, provider)?;
    Ok(render_ranked(
        g,
        &ranked,
        candidates_truncated(&table, PROPERTY_CANDIDATE_CAP),
        "no results",
    ))
}

fn iri_column(table: &ResultTable, var: &str) -> Vec<String> {
    let Some(col) = table.variables.iter().position(|v| v == var) else {
        return Vec::new();
    };
    table
        .rows
        .iter()
        .filter_map(|row| match row.get(col) {
            Some(Cell::Iri { iri }) => Some(iri.clone()),
            _ => None,
        })
        .collect()
}

// ---- object candidates (keyword only) ----------------------------------

/// Rank a mix of entity IRIs and literals by keyword match, on the raw
/// integer scale. IRIs missing from the entity index stay unscored.
fn rank_object_candidates(
    g: &GraphResources,
    query: &str,
    iris: Vec<String>,
    literals: Vec<String>,
) -> Result<(Vec<Ranked>, bool), Failure> {
    let mut ranked = Vec::new();
    let mut approximate = false;
    if !iris.is_empty() {
        let entities = require_entities(g)?;
        let set: HashSet<String> = iris.into_iter().collect();
        let response = entities.search(query, SEARCH_K, Some(&set));
        approximate |= response.approximate;
        ranked.extend(keyword_hits_ranked(response, None));
    }
    let query_tokens = tokenize(query);
    let mut seen = HashSet::new();
    for lexical in literals {
        if !seen.insert(lexical.clone()) {
            continue;
        }
        let score = score_alias(&query_tokens, &tokenize(&lexical));
        if score > 0 {
            ranked.push(Ranked {
                norm: score as f64,
                tie: 0,
                text: lexical.clone(),
                display: DisplayHit::Lit(lexical),
            });
        }
    }
    Ok((sort_and_take(ranked, SEARCH_K), approximate))
}

fn fn_search_object_of_property(g: &GraphResources, args: &Value) -> CallResult {
    let query = str_arg(args, "query")?;
    let prop = to_iri(str_arg(args, "prop")?, &g.config.prefixes)?;
    let candidate_query =
        format!("SELECT DISTINCT ?o WHERE {{ ?s <{prop}> ?o }} LIMIT {OBJECT_CANDIDATE_CAP}");
    let table = run_query(g, &candidate_query, OBJECT_CANDIDATE_CAP)?;
    let (iris, literals) = partition_candidates(&table, "o");
    if iris.is_empty() && literals.is_empty() {
        return Ok(FunctionResult::new(
            "no objects for property".to_string(),
            &g.config.prefixes,
        ));
    }
    let (ranked, search_approximate) = rank_object_candidates(g, query, iris, literals)?;
    Ok(render_ranked(
        g,
        &ranked,
        candidates_truncated(&table, OBJECT_CANDIDATE_CAP) || search_approximate,
        "no results",
    ))
}

fn partition_candidates(table: &ResultTable, var: &str) -> (Vec<String>, Vec<String>) {
    let Some(col) = table.variables.iter().position(|v| v == var) else {
        return (Vec::new(), Vec::new());
    };
    let mut iris = Vec::new();
    let mut literals = Vec::new();
    for row in &table.rows {
        match row.get(col) {
            Some(Cell::Iri { iri }) => iris.push(iri.clone()),
            Some(Cell::Literal { lexical, .. }) => literals.push(lexical.clone()),
            _ => {}
        }
    }
    (iris, literals)
}

// ---- autocomplete ------------------------------------------------------

fn fn_search_autocomplete(
    g: &GraphResources,
    args: &Value,
    provider: &dyn EmbeddingProvider,
) -> CallResult {
    let query = str_arg(args, "query")?;
    let sparql = str_arg(args, "sparql")?;
    let rewritten = rewrite_autocomplete_query(sparql)?;
    let table = run_query(g, &rewritten, OBJECT_CANDIDATE_CAP)?;
    let (iris, literals) = partition_candidates(&table, "search");
    if iris.is_empty() && literals.is_empty() {
        return Ok(FunctionResult::new(
            "no results".to_string(),
            &g.config.prefixes,
        ));
    }

    // Three-way merge on the normalized scale: indexed properties by
    // similarity, everything else by keyword match.
    let (property_iris, entity_iris): (Vec<String>, Vec<String>) = iris
        .into_iter()
        .partition(|iri| g.property_meta.contains_key(iri));
    let mut ranked = Vec::new();
    let mut approximate = candidates_truncated(&table, OBJECT_CANDIDATE_CAP);
    if !property_iris.is_empty() {
        ranked.extend(rank_property_candidates(g, query, &property_iris, provider)?);
    }
    let query_tokens = tokenize(query);
    let scale = keyword_scale(&query_tokens);
    if !entity_iris.is_empty() {
        let entities = require_entities(g)?;
        let set: HashSet<String> = entity_iris.into_iter().collect();
        let response = entities.search(query, SEARCH_K, Some(&set));
        approximate |= response.approximate;
        ranked.extend(keyword_hits_ranked(response, Some(scale)));
    }
    let mut seen = HashSet::new();
    for lexical in literals {
        if !seen.insert(lexical.clone()) {
            continue;
        }
        let score = score_alias(&query_tokens, &tokenize(&lexical));
        if score > 0 {
            ranked.push(Ranked {
                norm: score as f64 / scale,
                tie: 0,
                text: lexical.clone(),
                display: DisplayHit::Lit(lexical),
            });
        }
    }
    let ranked = sort_and_take(ranked, SEARCH_K);
    Ok(render_ranked(g, &ranked, approximate, "no results"))
}

/// Turn a SELECT query containing `?search` into
/// `SELECT DISTINCT ?search ...` with a bounded LIMIT.
fn rewrite_autocomplete_query(sparql: &str) -> Result<String, String> {
    use std::sync::OnceLock;
    static PROJECTION: OnceLock<regex::Regex> = OnceLock::new();
    static TRAILING_LIMIT: OnceLock<regex::Regex> = OnceLock::new();
    let projection = PROJECTION.get_or_init(|| {
        regex::Regex::new(r"(?si)\bSELECT\b(.*?)(\bWHERE\b|\{)").expect("valid pattern")
    });
    let trailing_limit = TRAILING_LIMIT
        .get_or_init(|| regex::Regex::new(r"(?si)\bLIMIT\s+(\d+)\s*$").expect("valid pattern"));

    let stripped = strip_comments(sparql);
    if classify_query(&stripped) != QueryForm::Select {
        return Err("the sparql argument must be a SELECT query".to_string());
    }
    let Some(caps) = projection.captures(&stripped) else {
        return Err("the sparql argument must be a SELECT query".to_string());
    };
    let keyword_start = caps.get(0).expect("match").start();
    let body_start = caps.get(2).expect("group").start();
    if !stripped[body_start..].contains("?search") {
        return Err("query must contain variable ?search".to_string());
    }
    let rewritten = format!(
        "{}SELECT DISTINCT ?search {}",
        &stripped[..keyword_start],
        &stripped[body_start..]
    );
    Ok(match trailing_limit.captures(&rewritten) {
        Some(caps) => {
            let existing: usize = caps[1].parse().unwrap_or(OBJECT_CANDIDATE_CAP);
            let span = caps.get(0).expect("match").range();
            format!(
                "{}LIMIT {}",
                &rewritten[..span.start],
                existing.min(OBJECT_CANDIDATE_CAP)
            )
        }
        None => format!("{rewritten}\nLIMIT {OBJECT_CANDIDATE_CAP}"),
    })
}

// ---- constrained -------------------------------------------------------

fn fn_search_constrained(
    g: &GraphResources,
    args: &Value,
    provider: &dyn EmbeddingProvider,
) -> CallResult {
    let query = str_arg(args, "query")?;
    let pos = str_arg(args, "pos")?;
    if !matches!(pos, "subj" | "prop" | "obj") {
        return Err(format!("pos must be one of subj, prop, obj; got {pos:?}").into());
    }

    let mut constraints: BTreeMap<&str, String> = BTreeMap::new();
    match args.get("constraints") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (key, value) in map {
                if !matches!(key.as_str(), "subj" | "prop" | "obj") {
                    return Err(
                        format!("constraints may only bind subj, prop, obj; got {key:?}").into(),
                    );
                }
                let Some(term) = value.as_str() else {
                    return Err(format!("constraint {key} must be a string").into());
                };
                constraints.insert(key.as_str(), to_iri(term, &g.config.prefixes)?);
            }
        }
        Some(_) => return Err("argument constraints must be an object".to_string().into()),
    }
    if constraints.contains_key(pos) {
        return Err(format!("position {pos} must not appear in constraints").into());
    }

    // Unconstrained, the function degenerates to the plain searches.
    if constraints.is_empty() {
        return match pos {
            "prop" => {
                let properties = require_properties(g)?;
                search_property_inner(g, properties, query, provider)
            }
            _ => {
                let entities = require_entities(g)?;
                Ok(search_entity_inner(g, entities, query))
            }
        };
    }

    let term_for = |position: &str, var: &str| -> String {
        if position == pos {
            "?x".to_string()
        } else {
            match constraints.get(position) {
                Some(iri) => format!("<{iri}>"),
                None => format!("?{var}"),
            }
        }
    };
    let s_term = term_for("subj", "s");
    let p_term = term_for("prop", "p");
    let o_term = term_for("obj", "o");
    let cap = if pos == "prop" {
        PROPERTY_CANDIDATE_CAP
    } else {
        OBJECT_CANDIDATE_CAP
    };
    let candidate_query =
        format!("SELECT DISTINCT ?x WHERE {{ {s_term} {p_term} {o_term} }} LIMIT {cap}");
    let table = run_query(g, &candidate_query, cap)?;

    if pos == "prop" {
        let candidates = iri_column(&table, "x");
        if candidates.is_empty() {
            return Ok(FunctionResult::new(
                "no results".to_string(),
                &g.config.prefixes,
            ));
        }
        let ranked = rank_property_candidates(g, query, &candidates, provider)?;
        Ok(render_ranked(
            g,
            &ranked,
            candidates_truncated(&table, cap),
            "no results",
        ))
    } else {
        let (iris, literals) = partition_candidates(&table, "x");
        if iris.is_empty() && literals.is_empty() {
            return Ok(FunctionResult::new(
                "no results".to_string(),
                &g.config.prefixes,
            ));
        }
        let (ranked, search_approximate) = rank_object_candidates(g, query, iris, literals)?;
        Ok(render_ranked(
            g,
            &ranked,
            candidates_truncated(&table, cap) || search_approximate,
            "no results",
        ))
    }
}

// ---- examples ----------------------------------------------------------

fn render_examples(g: &GraphResources, pairs: &[&ExamplePair]) -> FunctionResult {
    if pairs.is_empty() {
        return FunctionResult::new("no examples available".to_string(), &g.config.prefixes);
    }
    let blocks: Vec<String> = pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            format!(
                "{}. question: {}\nsparql:\n{}",
                i + 1,
                pair.question,
                pair.sparql
            )
        })
        .collect();
    let questions: Vec<&str> = pairs.iter().map(|p| p.question.as_str()).collect();
    FunctionResult::new(blocks.join("\n\n"), &g.config.prefixes)
        .with_structured(json!({ "questions": questions }))
}

fn fn_find_similar_examples(
    g: &GraphResources,
    args: &Value,
    provider: &dyn EmbeddingProvider,
) -> CallResult {
    let question = str_arg(args, "question")?;
    let Some(store) = &g.examples else {
        return Ok(FunctionResult::new(
            "no examples available".to_string(),
            &g.config.prefixes,
        ));
    };
    let pairs = store
        .find_similar(question, EXAMPLE_K, provider)
        .map_err(|e| vector_failure(g, e))?;
    Ok(render_examples(g, &pairs))
}

fn fn_find_examples(g: &GraphResources, rng: &mut StdRng) -> CallResult {
    let Some(store) = &g.examples else {
        return Ok(FunctionResult::new(
            "no examples available".to_string(),
            &g.config.prefixes,
        ));
    };
    let pairs = store.sample_random(EXAMPLE_K, rng);
    Ok(render_examples(g, &pairs))
}
