//! Prefix-keyword search over item records.
//!
//! Every alias (label and synonyms) of every item is tokenized into a
//! postings table. A query token earns 2 points against an alias that
//! contains it verbatim and 1 point against an alias token it properly
//! prefixes; an item is ranked by its best-scoring alias, with
//! popularity score and then ascending IRI breaking ties.

mod file;

pub use file::KeywordIndexDisk;

use std::collections::{BTreeMap, HashMap, HashSet};

use unicode_normalization::UnicodeNormalization;

use crate::catalog::ItemRecord;

/// Range scans stop after visiting this many postings and mark the
/// response approximate. Guards single-letter prefixes over very large
/// vocabularies.
pub const POSTING_CAP: usize = 1_000_000;

/// Lowercased, NFC-normalized tokens split on any non-alphanumeric
/// character, empty tokens dropped, order preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    text.nfc()
        .collect::<String>()
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Score one alias against the query: per query token, 2 for an exact
/// token match, else 1 if it properly prefixes some alias token, else 0,
/// summed over query tokens.
pub fn score_alias(query_tokens: &[String], alias_tokens: &[String]) -> u32 {
    query_tokens
        .iter()
        .map(|qt| {
            if alias_tokens.iter().any(|at| at == qt) {
                2
            } else if alias_tokens
                .iter()
                .any(|at| at.len() > qt.len() && at.starts_with(qt.as_str()))
            {
                1
            } else {
                0
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub item: ItemRecord,
    /// Whole-valued keyword score, or cosine similarity for hits coming
    /// from the vector index.
    pub match_score: f32,
    /// 1-based position in the result list.
    pub rank: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SearchResponse {
    pub hits: Vec<SearchHit>,
    /// True when a scan gave up after the posting cap; the hits are then
    /// drawn from a truncated candidate set.
    pub approximate: bool,
}

/// Read access shared by the in-memory index and the on-disk reader.
/// Both forms must rank identically.
pub trait KeywordSearch {
    fn search(
        &self,
        query: &str,
        k: usize,
        restrict_to: Option<&HashSet<String>>,
    ) -> SearchResponse;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn item_by_iri(&self, iri: &str) -> Option<ItemRecord>;
}

/// One search backend: enumerate postings under a token prefix and give
/// random access to item fields. Kept crate-private; the public surface
/// is [`KeywordSearch`].
pub(crate) trait PostingsSource {
    /// Visit `(token_is_exactly_prefix, item_id, alias_id)` for every
    /// posting of every token starting with `prefix`, tokens in
    /// ascending byte order. The visitor returns false to abort.
    fn scan_prefix(&self, prefix: &str, visit: &mut dyn FnMut(bool, u32, u32) -> bool);
    fn item_score(&self, id: u32) -> u32;
    fn item_iri(&self, id: u32) -> &str;
    fn item_record(&self, id: u32) -> ItemRecord;
    fn resolve_iri(&self, iri: &str) -> Option<u32>;
}

/// Scoring core used by both index forms.
pub(crate) fn run_search(
    source: &dyn PostingsSource,
    query: &str,
    k: usize,
    restrict_to: Option<&HashSet<String>>,
    posting_cap: usize,
) -> SearchResponse {
    let query_tokens = tokenize(query);
    if query_tokens.is_empty() || k == 0 {
        return SearchResponse::default();
    }

    let allowed: Option<HashSet<u32>> = restrict_to.map(|iris| {
        iris.iter()
            .filter_map(|iri| source.resolve_iri(iri))
            .collect()
    });

    // Best contribution per query token, tracked per (item, alias) so
    // that tokens from different aliases never pool into one score.
    let mut contributions: HashMap<(u32, u32), Vec<u8>> = HashMap::new();
    let mut visited = 0usize;
    let mut approximate = false;

    'tokens: for (qi, qt) in query_tokens.iter().enumerate() {
        let mut aborted = false;
        source.scan_prefix(qt, &mut |exact, item, alias| {
            visited += 1;
            if visited > posting_cap {
                aborted = true;
                return false;
            }
            if let Some(allowed) = &allowed {
                if !allowed.contains(&item) {
                    return true;
                }
            }
            let points = if exact { 2u8 } else { 1u8 };
            let row = contributions
                .entry((item, alias))
                .or_insert_with(|| vec![0u8; query_tokens.len()]);
            if points > row[qi] {
                row[qi] = points;
            }
            true
        });
        if aborted {
            approximate = true;
            break 'tokens;
        }
    }

    let mut best: HashMap<u32, u32> = HashMap::new();
    for ((item, _alias), row) in &contributions {
        let alias_score: u32 = row.iter().map(|&p| p as u32).sum();
        let entry = best.entry(*item).or_insert(0);
        if alias_score > *entry {
            *entry = alias_score;
        }
    }

    let mut ranked: Vec<(u32, u32)> = best
        .into_iter()
        .filter(|&(_, score)| score > 0)
        .collect();
    ranked.sort_unstable_by(|&(a_id, a_match), &(b_id, b_match)| {
        b_match
            .cmp(&a_match)
            .then_with(|| source.item_score(b_id).cmp(&source.item_score(a_id)))
            .then_with(|| source.item_iri(a_id).cmp(source.item_iri(b_id)))
    });
    ranked.truncate(k);

    SearchResponse {
        hits: ranked
            .into_iter()
            .enumerate()
            .map(|(i, (id, match_score))| SearchHit {
                item: source.item_record(id),
                match_score: match_score as f32,
                rank: i + 1,
            })
            .collect(),
        approximate,
    }
}

pub struct KeywordIndex {
    items: Vec<ItemRecord>,
    by_iri: HashMap<String, u32>,
    /// Parallel arrays sorted by token byte order.
    tokens: Vec<String>,
    postings: Vec<Vec<(u32, u32)>>,
    posting_cap: usize,
}

impl KeywordIndex {
    pub fn build(items: Vec<ItemRecord>) -> Self {
        let mut table: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (item_id, item) in items.iter().enumerate() {
            let item_id = item_id as u32;
            for (alias_id, alias) in item.aliases().enumerate() {
                let alias_id = alias_id as u32;
                let mut seen = HashSet::new();
                for token in tokenize(alias) {
                    // Repeated tokens within one alias post only once.
                    if seen.insert(token.clone()) {
                        table.entry(token).or_default().push((item_id, alias_id));
                    }
                }
            }
        }
        let by_iri = items
            .iter()
            .enumerate()
            .map(|(id, item)| (item.iri.clone(), id as u32))
            .collect();
        let mut tokens = Vec::with_capacity(table.len());
        let mut postings = Vec::with_capacity(table.len());
        for (token, mut list) in table {
            list.sort_unstable();
            list.dedup();
            tokens.push(token);
            postings.push(list);
        }
        KeywordIndex {
            items,
            by_iri,
            tokens,
            postings,
            posting_cap: POSTING_CAP,
        }
    }

    /// Lower the scan cap; only useful for exercising the approximate
    /// path in tests.
    pub fn with_posting_cap(mut self, cap: usize) -> Self {
        self.posting_cap = cap;
        self
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub(crate) fn token_sections(&self) -> (&[ItemRecord], &[String], &[Vec<(u32, u32)>]) {
        (&self.items, &self.tokens, &self.postings)
    }
}

impl PostingsSource for KeywordIndex {
    fn scan_prefix(&self, prefix: &str, visit: &mut dyn FnMut(bool, u32, u32) -> bool) {
        let start = self.tokens.partition_point(|t| t.as_str() < prefix);
        for i in start..self.tokens.len() {
            let token = &self.tokens[i];
            if !token.starts_with(prefix) {
                break;
            }
            let exact = token == prefix;
            for &(item, alias) in &self.postings[i] {
                if !visit(exact, item, alias) {
                    return;
                }
            }
        }
    }

    fn item_score(&self, id: u32) -> u32 {
        self.items[id as usize].score
    }

    fn item_iri(&self, id: u32) -> &str {
        &self.items[id as usize].iri
    }

    fn item_record(&self, id: u32) -> ItemRecord {
        self.items[id as usize].clone()
    }

    fn resolve_iri(&self, iri: &str) -> Option<u32> {
        self.by_iri.get(iri).copied()
    }
}

impl KeywordSearch for KeywordIndex {
    fn search(
        &self,
        query: &str,
        k: usize,
        restrict_to: Option<&HashSet<String>>,
    ) -> SearchResponse {
        run_search(self, query, k, restrict_to, self.posting_cap)
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn item_by_iri(&self, iri: &str) -> Option<ItemRecord> {
        self.by_iri
            .get(iri)
            .map(|&id| self.items[id as usize].clone())
    }
}
