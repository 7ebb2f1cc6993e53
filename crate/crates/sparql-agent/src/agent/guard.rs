//! Optional hallucination guard for executed queries.
//!
//! When enabled, a query may only use IRIs the session has already
//! seen: IRIs returned by earlier function results, IRIs named in the
//! instruction, and the core vocabulary namespaces (rdf, rdfs, xsd,
//! owl). Anything else is rejected before the query reaches the
//! endpoint, with the offending IRIs named so the model can search for
//! the right ones instead.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::prefix::{is_well_known, PrefixTable};
use crate::sparql::strip_comments;
use crate::toolbox::extract_iris;

fn prologue_declarations() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(r"(?i)\b(?:PREFIX\s+([A-Za-z][A-Za-z0-9_.-]*)?\s*:\s*|BASE\s*)<([^>]*)>")
            .expect("valid pattern")
    })
}

/// Check `query` against the set of IRIs seen so far. `Err` carries the
/// unknown IRIs, absolute and sorted.
pub fn check_query(
    query: &str,
    catalog_prefixes: &PrefixTable,
    seen: &BTreeSet<String>,
) -> Result<(), Vec<String>> {
    let stripped = strip_comments(query);

    // Prefixes declared by the query itself expand like catalog ones,
    // and the declarations are dropped from the scan so their base IRIs
    // are not treated as query terms.
    let mut combined = catalog_prefixes.clone();
    for caps in prologue_declarations().captures_iter(&stripped) {
        if let (Some(name), Some(base)) = (caps.get(1), caps.get(2)) {
            combined.insert(name.as_str(), base.as_str());
        }
    }
    let body = prologue_declarations().replace_all(&stripped, " ");

    let offenders: Vec<String> = extract_iris(&body, &combined)
        .into_iter()
        .filter(|iri| !is_well_known(iri) && !seen.contains(iri))
        .collect();
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(offenders)
    }
}

/// Model-visible rejection text naming the unknown IRIs.
pub fn rejection_text(offenders: &[String]) -> String {
    format!(
        "query rejected: it uses IRIs no function result has mentioned: {}. \
         Find the correct IRIs with the search functions first.",
        offenders.join(", ")
    )
}
