//! Prefix/IRI handling shared by every module that touches IRIs.
//!
//! A [`PrefixTable`] maps prefix names like `wd` to IRI bases like
//! `http://www.wikidata.org/entity/`. Indices store absolute IRIs only;
//! rendering shortens them back to prefixed form for token economy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Ordered prefix name -> IRI base mapping for one knowledge graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixTable {
    entries: BTreeMap<String, String>,
}

impl PrefixTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from (prefix, base) pairs. Later duplicates are rejected by
    /// the catalog loader before this is called.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let entries = pairs
            .into_iter()
            .map(|(p, b)| (p.into(), b.into()))
            .collect();
        Self { entries }
    }

    pub fn insert(&mut self, prefix: impl Into<String>, base: impl Into<String>) {
        self.entries.insert(prefix.into(), base.into());
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(p, b)| (p.as_str(), b.as_str()))
    }

    pub fn base(&self, prefix: &str) -> Option<&str> {
        self.entries.get(prefix).map(String::as_str)
    }

    /// Expand a possibly prefixed IRI to absolute form.
    ///
    /// `wd:Q9047` becomes `http://www.wikidata.org/entity/Q9047` when `wd`
    /// is registered. Angle brackets are stripped. Strings that are already
    /// absolute (contain `://`) or use an unregistered prefix are returned
    /// unchanged apart from bracket stripping.
    pub fn expand(&self, iri: &str) -> String {
        let trimmed = iri.trim();
        let bare = trimmed
            .strip_prefix('<')
            .and_then(|s| s.strip_suffix('>'))
            .unwrap_or(trimmed);
        if bare.contains("://") {
            return bare.to_string();
        }
        if let Some((prefix, local)) = bare.split_once(':') {
            if let Some(base) = self.entries.get(prefix) {
                return format!("{base}{local}");
            }
        }
        bare.to_string()
    }

    /// Shorten an absolute IRI to prefixed form using the longest matching
    /// base. Returns `None` when no registered base matches.
    pub fn shorten(&self, iri: &str) -> Option<String> {
        let mut best: Option<(&str, &str)> = None;
        for (prefix, base) in &self.entries {
            if let Some(local) = iri.strip_prefix(base.as_str()) {
                // A local part with a slash would not round-trip cleanly.
                if local.is_empty() || local.contains('/') || local.contains('#') {
                    continue;
                }
                match best {
                    Some((_, b)) if b.len() >= base.len() => {}
                    _ => best = Some((prefix, base)),
                }
            }
        }
        best.map(|(prefix, base)| format!("{prefix}:{}", &iri[base.len()..]))
    }

    /// Shorten when possible, otherwise return the absolute form unchanged.
    pub fn shorten_or_keep(&self, iri: &str) -> String {
        self.shorten(iri).unwrap_or_else(|| iri.to_string())
    }
}

/// Well-known vocabulary bases that are always considered "seen" by the
/// strict IRI guard.
pub const WELL_KNOWN_VOCAB: &[(&str, &str)] = &[
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
    ("owl", "http://www.w3.org/2002/07/owl#"),
];

/// True if the IRI belongs to one of the always-allowed vocabularies.
pub fn is_well_known(iri: &str) -> bool {
    WELL_KNOWN_VOCAB
        .iter()
        .any(|(_, base)| iri.starts_with(base))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> PrefixTable {
        PrefixTable::from_pairs(vec![
            ("wd", "http://www.wikidata.org/entity/"),
            ("wdt", "http://www.wikidata.org/prop/direct/"),
            ("p", "http://www.wikidata.org/prop/"),
        ])
    }

    #[test]
    fn expand_prefixed() {
        let t = table();
        assert_eq!(t.expand("wd:Q9047"), "http://www.wikidata.org/entity/Q9047");
        assert_eq!(
            t.expand("<http://example.org/a>"),
            "http://example.org/a"
        );
        // unknown prefix stays as-is
        assert_eq!(t.expand("foo:bar"), "foo:bar");
    }

    #[test]
    fn shorten_longest_base_wins() {
        let t = table();
        assert_eq!(
            t.shorten("http://www.wikidata.org/prop/direct/P31"),
            Some("wdt:P31".to_string())
        );
        assert_eq!(
            t.shorten("http://www.wikidata.org/prop/P39"),
            Some("p:P39".to_string())
        );
        assert_eq!(t.shorten("http://elsewhere.org/x"), None);
    }

    #[test]
    fn roundtrip() {
        let t = table();
        let abs = "http://www.wikidata.org/entity/Q42";
        assert_eq!(t.expand(&t.shorten(abs).unwrap()), abs);
    }

    #[test]
    fn well_known_vocab() {
        assert!(is_well_known("http://www.w3.org/2000/01/rdf-schema#label"));
        assert!(!is_well_known("http://www.wikidata.org/entity/Q42"));
    }
}
