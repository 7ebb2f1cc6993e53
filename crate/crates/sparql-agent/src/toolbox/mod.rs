//! The functions the model can call during a session.
//!
//! Each function takes a knowledge graph name plus its own arguments
//! and produces a bounded textual result for the model. Argument
//! problems and endpoint failures are rendered as model-visible text so
//! the loop can self-correct; only configuration defects (a missing
//! index for a registered graph) abort the session.
//!
//! `answer` and `cancel` terminate the session and are handled by the
//! agent loop; their schemas are declared here so the advertised tool
//! set is complete.

mod calls;
mod resources;

pub use calls::FunctionCall;
pub use resources::{
    build_graph_indexes, GraphResources, Toolbox, ToolboxOptions, KEYWORD_INDEX_SUFFIX,
    VECTOR_INDEX_SUFFIX,
};

use std::collections::BTreeSet;

use serde_json::{json, Value};
use thiserror::Error;

use crate::prefix::PrefixTable;

/// Short internal names for the twelve functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mnemonic {
    Ans,
    Can,
    Exe,
    Lst,
    Sen,
    Spr,
    Spe,
    Sop,
    Sac,
    Scn,
    Fse,
    Fex,
}

impl Mnemonic {
    pub const ALL: [Mnemonic; 12] = [
        Mnemonic::Ans,
        Mnemonic::Can,
        Mnemonic::Exe,
        Mnemonic::Lst,
        Mnemonic::Sen,
        Mnemonic::Spr,
        Mnemonic::Spe,
        Mnemonic::Sop,
        Mnemonic::Sac,
        Mnemonic::Scn,
        Mnemonic::Fse,
        Mnemonic::Fex,
    ];

    /// The function name used on the wire and in traces.
    pub fn wire_name(self) -> &'static str {
        match self {
            Mnemonic::Ans => "answer",
            Mnemonic::Can => "cancel",
            Mnemonic::Exe => "execute",
            Mnemonic::Lst => "list",
            Mnemonic::Sen => "search_entity",
            Mnemonic::Spr => "search_property",
            Mnemonic::Spe => "search_property_of_entity",
            Mnemonic::Sop => "search_object_of_property",
            Mnemonic::Sac => "search_autocomplete",
            Mnemonic::Scn => "search_constrained",
            Mnemonic::Fse => "find_similar_examples",
            Mnemonic::Fex => "find_examples",
        }
    }

    pub fn from_wire_name(name: &str) -> Option<Mnemonic> {
        Mnemonic::ALL
            .into_iter()
            .find(|m| m.wire_name() == name)
    }
}

impl std::fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.wire_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    String,
    /// A JSON object with the named string fields; `true` marks a field
    /// required.
    Object(&'static [(&'static str, bool)]),
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: &'static str,
    pub required: bool,
    pub kind: ParamKind,
}

/// Declaration of one callable function: what the model sees.
#[derive(Debug, Clone)]
pub struct FunctionSpec {
    pub mnemonic: Mnemonic,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
}

impl FunctionSpec {
    pub fn name(&self) -> &'static str {
        self.mnemonic.wire_name()
    }

    /// JSON schema for the parameter object, in the shape chat tool
    /// declarations expect.
    pub fn parameters_schema(&self) -> Value {
        let mut properties = serde_json::Map::new();
        let mut required = Vec::new();
        for param in &self.params {
            let schema = match param.kind {
                ParamKind::String => json!({ "type": "string" }),
                ParamKind::Object(fields) => {
                    let mut inner = serde_json::Map::new();
                    let mut inner_required = Vec::new();
                    for (field, field_required) in fields {
                        inner.insert(field.to_string(), json!({ "type": "string" }));
                        if *field_required {
                            inner_required.push(field.to_string());
                        }
                    }
                    json!({ "type": "object", "properties": inner, "required": inner_required })
                }
            };
            properties.insert(param.name.to_string(), schema);
            if param.required {
                required.push(param.name.to_string());
            }
        }
        json!({ "type": "object", "properties": properties, "required": required })
    }

    /// Full tool declaration in the common chat-completion format.
    pub fn to_tool_schema(&self) -> Value {
        json!({
            "type": "function",
            "function": {
                "name": self.name(),
                "description": self.description,
                "parameters": self.parameters_schema(),
            }
        })
    }
}

fn string_param(name: &'static str, required: bool) -> ParamSpec {
    ParamSpec {
        name,
        required,
        kind: ParamKind::String,
    }
}

/// Declarations for all twelve functions. Function sets select subsets
/// of these by mnemonic.
pub fn function_specs() -> Vec<FunctionSpec> {
    vec![
        FunctionSpec {
            mnemonic: Mnemonic::Ans,
            description: "Finish the task by answering the question. Pass the knowledge graph \
                kg, the final SPARQL query sparql that computes the result, and a short \
                natural-language answer derived from executing it.",
            params: vec![
                string_param("kg", true),
                string_param("sparql", true),
                string_param("answer", true),
            ],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Can,
            description: "Give up on the task. Pass an explanation of what was tried and why \
                no answer could be produced, and optionally best_attempt, the most promising \
                query found so far, as an object with fields sparql and kg.",
            params: vec![
                string_param("explanation", true),
                ParamSpec {
                    name: "best_attempt",
                    required: false,
                    kind: ParamKind::Object(&[("sparql", true), ("kg", true)]),
                },
            ],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Exe,
            description: "Execute a SPARQL query over the knowledge graph kg and return the \
                result table, or an error message. The sparql argument must be a SELECT or \
                ASK query. Tables with more than 10 rows show only the first five and last \
                five rows.",
            params: vec![string_param("kg", true), string_param("sparql", true)],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Lst,
            description: "List up to 10 relevant and diverse triples from the knowledge graph \
                kg. Constrain the triple pattern by binding any of subj, prop, obj to IRIs; \
                unbound positions match anything.",
            params: vec![
                string_param("kg", true),
                string_param("subj", false),
                string_param("prop", false),
                string_param("obj", false),
            ],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Sen,
            description: "Search entities of the knowledge graph kg by keyword. The query is \
                matched against entity labels and synonyms by exact and prefix token matches. \
                Returns the top 10 entities.",
            params: vec![string_param("kg", true), string_param("query", true)],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Spr,
            description: "Search properties of the knowledge graph kg by meaning. The query \
                is embedded and compared against property texts by cosine similarity. \
                Returns the top 10 properties.",
            params: vec![string_param("kg", true), string_param("query", true)],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Spe,
            description: "Search properties that exist for the entity ent in the knowledge \
                graph kg, ranked by similarity to the query. Returns the top 10.",
            params: vec![
                string_param("kg", true),
                string_param("query", true),
                string_param("ent", true),
            ],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Sop,
            description: "Search entities and literals occurring at the object position of \
                the property prop in the knowledge graph kg, ranked against the query. \
                Returns the top 10.",
            params: vec![
                string_param("kg", true),
                string_param("query", true),
                string_param("prop", true),
            ],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Sac,
            description: "Search for bindings of the variable ?search in the given SELECT \
                query over the knowledge graph kg, ranked against the query argument. The \
                sparql argument must be a SELECT query containing ?search in its body. \
                Returns the top 10.",
            params: vec![
                string_param("kg", true),
                string_param("query", true),
                string_param("sparql", true),
            ],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Scn,
            description: "Search the knowledge graph kg for triple items at the position pos \
                (one of subj, prop, obj), ranked against the query, restricted to triples \
                matching the constraints object, which may bind subj, prop, or obj to IRIs. \
                The position pos itself must not appear in the constraints. Returns the \
                top 10.",
            params: vec![
                string_param("kg", true),
                string_param("query", true),
                string_param("pos", true),
                ParamSpec {
                    name: "constraints",
                    required: false,
                    kind: ParamKind::Object(&[("subj", false), ("prop", false), ("obj", false)]),
                },
            ],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Fse,
            description: "Return the three question-SPARQL example pairs over the knowledge \
                graph kg whose questions are most similar to the given question.",
            params: vec![string_param("kg", true), string_param("question", true)],
        },
        FunctionSpec {
            mnemonic: Mnemonic::Fex,
            description: "Return three randomly selected question-SPARQL example pairs over \
                the knowledge graph kg.",
            params: vec![string_param("kg", true)],
        },
    ]
}

pub fn spec_for(mnemonic: Mnemonic) -> FunctionSpec {
    function_specs()
        .into_iter()
        .find(|s| s.mnemonic == mnemonic)
        .expect("every mnemonic has a spec")
}

/// What one function call produced.
#[derive(Debug, Clone)]
pub struct FunctionResult {
    /// Exactly what the model sees.
    pub rendered: String,
    /// Absolute IRIs surfaced in the rendered text. Computed by
    /// scanning the text, so the two can never drift apart.
    pub mentioned_iris: BTreeSet<String>,
    /// Small machine-readable summary for traces.
    pub structured: Option<Value>,
    /// False when the rendered text reports an argument or execution
    /// problem instead of a result.
    pub ok: bool,
}

impl FunctionResult {
    pub fn new(rendered: String, prefixes: &PrefixTable) -> Self {
        let mentioned_iris = extract_iris(&rendered, prefixes);
        FunctionResult {
            rendered,
            mentioned_iris,
            structured: None,
            ok: true,
        }
    }

    pub fn error(rendered: String, prefixes: &PrefixTable) -> Self {
        let mut result = FunctionResult::new(rendered, prefixes);
        result.ok = false;
        result
    }

    pub fn with_structured(mut self, value: Value) -> Self {
        self.structured = Some(value);
        self
    }
}

/// Find every IRI a piece of text mentions, expanded to absolute form:
/// bracketed `<http://...>`, bare `http(s)://...`, and `prefix:local`
/// names whose prefix the table registers.
pub fn extract_iris(text: &str, prefixes: &PrefixTable) -> BTreeSet<String> {
    use std::sync::OnceLock;
    static BARE: OnceLock<regex::Regex> = OnceLock::new();
    static PREFIXED: OnceLock<regex::Regex> = OnceLock::new();
    let bare = BARE.get_or_init(|| {
        regex::Regex::new(r#"https?://[^\s<>"')\]}]+"#).expect("valid pattern")
    });
    let prefixed = PREFIXED.get_or_init(|| {
        regex::Regex::new(r"(?:^|[^\w:])([A-Za-z][A-Za-z0-9_.-]*):([A-Za-z0-9_][A-Za-z0-9_.%-]*)")
            .expect("valid pattern")
    });

    let mut iris = BTreeSet::new();
    for m in bare.find_iter(text) {
        let iri = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?']);
        iris.insert(iri.to_string());
    }
    for caps in prefixed.captures_iter(text) {
        let name = &caps[1];
        if prefixes.base(name).is_some() {
            let local = caps[2].trim_end_matches('.');
            if !local.is_empty() {
                iris.insert(prefixes.expand(&format!("{name}:{local}")));
            }
        }
    }
    iris
}

#[derive(Debug, Error)]
pub enum ToolboxError {
    #[error("knowledge graph {kg} has no {what}; sessions over it cannot run this function")]
    MissingResource { kg: String, what: &'static str },
    #[error("cannot prepare knowledge graph {kg}: {problem}")]
    Resource { kg: String, problem: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_unique_mnemonics_and_names() {
        let specs = function_specs();
        assert_eq!(specs.len(), 12);
        let mnemonics: BTreeSet<_> = specs.iter().map(|s| s.mnemonic).collect();
        assert_eq!(mnemonics.len(), 12);
        let names: BTreeSet<_> = specs.iter().map(|s| s.name()).collect();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn every_parameter_appears_in_its_description() {
        for spec in function_specs() {
            for param in &spec.params {
                assert!(
                    spec.description.contains(param.name),
                    "{} does not mention {}",
                    spec.name(),
                    param.name
                );
            }
        }
    }

    #[test]
    fn wire_names_round_trip() {
        for m in Mnemonic::ALL {
            assert_eq!(Mnemonic::from_wire_name(m.wire_name()), Some(m));
        }
        assert_eq!(Mnemonic::from_wire_name("no_such_function"), None);
    }

    #[test]
    fn tool_schema_shape() {
        let schema = spec_for(Mnemonic::Exe).to_tool_schema();
        assert_eq!(schema["type"], "function");
        assert_eq!(schema["function"]["name"], "execute");
        let params = &schema["function"]["parameters"];
        assert_eq!(params["type"], "object");
        assert!(params["properties"]["kg"].is_object());
        assert!(params["properties"]["sparql"].is_object());
        assert_eq!(params["required"][0], "kg");
    }

    #[test]
    fn object_params_declare_fields() {
        let schema = spec_for(Mnemonic::Can).to_tool_schema();
        let attempt = &schema["function"]["parameters"]["properties"]["best_attempt"];
        assert_eq!(attempt["type"], "object");
        assert!(attempt["properties"]["sparql"].is_object());
        assert!(attempt["properties"]["kg"].is_object());
    }

    fn wikidata_prefixes() -> PrefixTable {
        PrefixTable::from_pairs(vec![
            ("wd", "http://www.wikidata.org/entity/"),
            ("wdt", "http://www.wikidata.org/prop/direct/"),
        ])
    }

    #[test]
    fn extracts_bracketed_bare_and_prefixed() {
        let text = "found wd:Q42 and <http://example.org/a> plus http://example.org/b.";
        let iris = extract_iris(text, &wikidata_prefixes());
        assert!(iris.contains("http://www.wikidata.org/entity/Q42"));
        assert!(iris.contains("http://example.org/a"));
        assert!(iris.contains("http://example.org/b"));
        assert_eq!(iris.len(), 3);
    }

    #[test]
    fn unregistered_prefixes_are_ignored() {
        let iris = extract_iris("see foo:Bar and note: nothing", &wikidata_prefixes());
        assert!(iris.is_empty());
    }

    #[test]
    fn sparql_text_yields_its_iris() {
        let query = "SELECT ?s WHERE { ?s wdt:P31 wd:Q5 . ?s <http://example.org/p> ?o }";
        let iris = extract_iris(query, &wikidata_prefixes());
        assert_eq!(
            iris,
            BTreeSet::from([
                "http://www.wikidata.org/prop/direct/P31".to_string(),
                "http://www.wikidata.org/entity/Q5".to_string(),
                "http://example.org/p".to_string(),
            ])
        );
    }

    #[test]
    fn trailing_punctuation_is_trimmed() {
        let iris = extract_iris("wd:Q42. done", &wikidata_prefixes());
        assert!(iris.contains("http://www.wikidata.org/entity/Q42"));
    }

    #[test]
    fn result_scan_matches_rendered_text() {
        let prefixes = wikidata_prefixes();
        let result = FunctionResult::new(
            "1. Douglas Adams (wd:Q42) — English writer".to_string(),
            &prefixes,
        );
        assert_eq!(
            result.mentioned_iris,
            BTreeSet::from(["http://www.wikidata.org/entity/Q42".to_string()])
        );
        assert!(result.ok);
        let err = FunctionResult::error("no results".to_string(), &prefixes);
        assert!(!err.ok);
        assert!(err.mentioned_iris.is_empty());
    }
}
