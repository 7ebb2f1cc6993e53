//! Result-table scoring.
//!
//! The headline score is an assignment F1: ground-truth rows are
//! matched to predicted rows one-to-one, where a predicted row counts
//! as a match when it contains every ground-truth cell (so extra
//! columns such as labels cost nothing). Precision and recall fall out
//! of the maximum matching. Past [`ASSIGNMENT_ROW_CAP`] rows per side
//! the metric reverts to a strict multiset F1 over whole rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sparql::{Cell, ResultTable};

/// Row-count bound for the assignment metric; larger tables use
/// [`exact_f1`].
pub const ASSIGNMENT_ROW_CAP: usize = 1024;

/// Which rule produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorePath {
    /// Assignment F1 over matched rows.
    Matched,
    /// Strict multiset F1, used past the row cap.
    ExactFallback,
    /// An ASK result on either side, scored by boolean equivalence.
    AskEquivalence,
    /// Empty or failed ground truth; dropped from averages.
    Excluded,
    /// The prediction errored or produced no query.
    Error,
}

impl ScorePath {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorePath::Matched => "matched",
            ScorePath::ExactFallback => "exact_fallback",
            ScorePath::AskEquivalence => "ask_equivalence",
            ScorePath::Excluded => "excluded",
            ScorePath::Error => "error",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub path: ScorePath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl EvalScore {
    fn from_counts(matches: usize, pred_rows: usize, gt_rows: usize, path: ScorePath) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(matches, pred_rows);
        let recall = ratio(matches, gt_rows);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalScore {
            precision,
            recall,
            f1,
            path,
            notes: None,
        }
    }

    fn unit(value: f64, path: ScorePath) -> Self {
        EvalScore {
            precision: value,
            recall: value,
            f1: value,
            path,
            notes: None,
        }
    }

    pub fn error(note: impl Into<String>) -> Self {
        EvalScore::unit(0.0, ScorePath::Error).with_note(note)
    }

    pub fn excluded(note: impl Into<String>) -> Self {
        EvalScore::unit(0.0, ScorePath::Excluded).with_note(note)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes = Some(note.into());
        self
    }
}

/// A cell reduced to its comparison value. Unbound cells carry no
/// value and are dropped before comparison.
#[derive(Debug, Clone, PartialEq)]
enum NormCell {
    Iri(String),
    Num(f64),
    /// Calendar date plus optional time of day; comparison truncates
    /// to the coarser precision of the pair.
    Date { date: String, time: Option<String> },
    Text(String),
    Blank,
}

fn normalize_cell(cell: &Cell) -> Option<NormCell> {
    match cell {
        Cell::Iri { iri } => Some(NormCell::Iri(iri.clone())),
        Cell::Blank { .. } => Some(NormCell::Blank),
        Cell::Unbound => None,
        Cell::Literal { lexical, .. } => Some(normalize_literal(lexical)),
    }
}

/// Literals compare by lexical form; datatype and language tag are
/// ignored beyond shaping the value. Numeric forms collapse ("+5" and
/// "5.0" are equal), date forms split into date and time.
fn normalize_literal(lexical: &str) -> NormCell {
    let trimmed = lexical.trim();
    if let Some(cell) = parse_date(trimmed) {
        return cell;
    }
    if trimmed
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.'))
    {
        if let Ok(value) = trimmed.parse::<f64>() {
            if value.is_finite() {
                return NormCell::Num(value);
            }
        }
    }
    NormCell::Text(lexical.to_string())
}

fn parse_date(s: &str) -> Option<NormCell> {
    let (date, rest) = match s.split_once('T') {
        Some((date, time)) => (date, Some(time)),
        None => (s, None),
    };
    let digits = date.strip_prefix('-').unwrap_or(date);
    let parts: Vec<&str> = digits.split('-').collect();
    let [year, month, day] = parts.as_slice() else {
        return None;
    };
    if year.len() < 4
        || month.len() != 2
        || day.len() != 2
        || !parts.iter().all(|p| p.bytes().all(|b| b.is_ascii_digit()))
    {
        return None;
    }
    let time = rest.map(canonical_time);
    Some(NormCell::Date {
        date: date.to_string(),
        time,
    })
}

/// Strip the timezone designator and trailing fractional zeros so
/// "00:00:00Z" and "00:00:00.000+00:00" compare equal.
fn canonical_time(time: &str) -> String {
    let mut t = time.strip_suffix('Z').unwrap_or(time);
    for sign in ['+', '-'] {
        if let Some(pos) = t.rfind(sign) {
            if t[pos..].chars().skip(1).all(|c| c.is_ascii_digit() || c == ':') {
                t = &t[..pos];
            }
        }
    }
    if t.contains('.') {
        t = t.trim_end_matches('0').trim_end_matches('.');
    }
    t.to_string()
}

fn cells_equal(a: &NormCell, b: &NormCell) -> bool {
    match (a, b) {
        (NormCell::Iri(x), NormCell::Iri(y)) => x == y,
        (NormCell::Num(x), NormCell::Num(y)) => x == y,
        (
            NormCell::Date { date: d1, time: t1 },
            NormCell::Date { date: d2, time: t2 },
        ) => {
            d1 == d2
                && match (t1, t2) {
                    (Some(a), Some(b)) => a == b,
                    _ => true,
                }
        }
        (NormCell::Text(x), NormCell::Text(y)) => x == y,
        (NormCell::Blank, NormCell::Blank) => true,
        _ => false,
    }
}

fn normalize_row(row: &[Cell]) -> Vec<NormCell> {
    row.iter().filter_map(normalize_cell).collect()
}

/// Maximum bipartite matching by augmenting paths. `adjacency[l]`
/// lists the right-side vertices reachable from left vertex `l`.
fn max_matching(adjacency: &[Vec<usize>], right_len: usize) -> usize {
    fn augment(
        left: usize,
        adjacency: &[Vec<usize>],
        matched: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for &right in &adjacency[left] {
            if visited[right] {
                continue;
            }
            visited[right] = true;
            let free = match matched[right] {
                None => true,
                Some(owner) => augment(owner, adjacency, matched, visited),
            };
            if free {
                matched[right] = Some(left);
                return true;
            }
        }
        false
    }

    let mut matched: Vec<Option<usize>> = vec![None; right_len];
    let mut size = 0;
    for left in 0..adjacency.len() {
        let mut visited = vec![false; right_len];
        if augment(left, adjacency, &mut matched, &mut visited) {
            size += 1;
        }
    }
    size
}

/// True when every ground-truth cell finds its own equal cell in the
/// predicted row; the predicted row may carry extra cells.
pub fn row_match(gt_row: &[Cell], pred_row: &[Cell]) -> bool {
    norm_rows_match(&normalize_row(gt_row), &normalize_row(pred_row))
}

fn norm_rows_match(gt: &[NormCell], pred: &[NormCell]) -> bool {
    if gt.is_empty() {
        return true;
    }
    if gt.len() > pred.len() {
        return false;
    }
    let adjacency: Vec<Vec<usize>> = gt
        .iter()
        .map(|g| {
            pred.iter()
                .enumerate()
                .filter(|(_, p)| cells_equal(g, p))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    max_matching(&adjacency, pred.len()) == gt.len()
}

/// Assignment F1 between two SELECT results, both within
/// [`ASSIGNMENT_ROW_CAP`] rows.
pub fn assignment_f1(gt: &ResultTable, pred: &ResultTable) -> EvalScore {
    if gt.rows.is_empty() && pred.rows.is_empty() {
        return EvalScore::unit(1.0, ScorePath::Matched);
    }
    let gt_rows: Vec<Vec<NormCell>> = gt.rows.iter().map(|r| normalize_row(r)).collect();
    let pred_rows: Vec<Vec<NormCell>> = pred.rows.iter().map(|r| normalize_row(r)).collect();
    let adjacency: Vec<Vec<usize>> = gt_rows
        .iter()
        .map(|g| {
            pred_rows
                .iter()
                .enumerate()
                .filter(|(_, p)| norm_rows_match(g, p))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let matches = max_matching(&adjacency, pred_rows.len());
    EvalScore::from_counts(matches, pred_rows.len(), gt_rows.len(), ScorePath::Matched)
}

/// Canonical strict form of a row: each cell rendered to a tagged
/// string, the row sorted so column order does not matter, unbound
/// cells dropped.
fn canonical_row(row: &[Cell]) -> Vec<String> {
    let mut cells: Vec<String> = normalize_row(row)
        .into_iter()
        .map(|c| match c {
            NormCell::Iri(iri) => format!("<{iri}>"),
            NormCell::Num(n) => format!("n:{n}"),
            NormCell::Date { date, time: None } => format!("d:{date}"),
            NormCell::Date {
                date,
                time: Some(t),
            } => format!("d:{date}T{t}"),
            NormCell::Text(s) => format!("s:{s}"),
            NormCell::Blank => "b:".to_string(),
        })
        .collect();
    cells.sort();
    cells
}

/// Strict multiset F1 over whole rows; no allowance for extra columns.
pub fn exact_f1(gt: &ResultTable, pred: &ResultTable) -> EvalScore {
    if gt.rows.is_empty() && pred.rows.is_empty() {
        return EvalScore::unit(1.0, ScorePath::ExactFallback);
    }
    let mut remaining: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for row in &gt.rows {
        *remaining.entry(canonical_row(row)).or_insert(0) += 1;
    }
    let mut intersection = 0;
    for row in &pred.rows {
        if let Some(count) = remaining.get_mut(&canonical_row(row)) {
            if *count > 0 {
                *count -= 1;
                intersection += 1;
            }
        }
    }
    EvalScore::from_counts(
        intersection,
        pred.rows.len(),
        gt.rows.len(),
        ScorePath::ExactFallback,
    )
}

/// Score a predicted result against ground truth.
///
/// Empty ground-truth SELECTs are excluded. An ASK on either side is
/// scored by boolean equivalence, where a SELECT stands in for the
/// boolean "has any row". Two SELECTs use the assignment F1, or the
/// strict fallback past the row cap.
pub fn score_results(gt: &ResultTable, pred: &ResultTable) -> EvalScore {
    if gt.is_ask.is_none() && gt.total_rows == 0 {
        return EvalScore::excluded("ground truth returned no rows");
    }
    let equivalence = |equal: bool| {
        EvalScore::unit(if equal { 1.0 } else { 0.0 }, ScorePath::AskEquivalence)
    };
    match (gt.is_ask, pred.is_ask) {
        (Some(g), Some(p)) => equivalence(g == p),
        (Some(g), None) => equivalence(g == (pred.total_rows > 0)),
        (None, Some(p)) => equivalence(p == (gt.total_rows > 0)),
        (None, None) => {
            let score = if gt.rows.len() > ASSIGNMENT_ROW_CAP
                || pred.rows.len() > ASSIGNMENT_ROW_CAP
            {
                exact_f1(gt, pred)
            } else {
                assignment_f1(gt, pred)
            };
            if gt.truncated || pred.truncated {
                score.with_note("a result was truncated; scored on the materialized rows")
            } else {
                score
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn iri_table(iris: &[&str]) -> ResultTable {
        ResultTable::select(
            vec!["x".to_string()],
            iris.iter().map(|i| vec![Cell::iri(*i)]).collect(),
        )
    }

    const F1_TOLERANCE: f64 = 1e-12;

    #[test]
    fn row_match_allows_extra_label_columns() {
        let gt = vec![Cell::iri("http://www.wikidata.org/entity/Q42")];
        let pred = vec![
            Cell::iri("http://www.wikidata.org/entity/Q42"),
            Cell::literal("Douglas Adams"),
        ];
        assert!(row_match(&gt, &pred));
        assert!(!row_match(&pred, &gt));
    }

    #[test]
    fn row_match_respects_multiplicity() {
        let a = Cell::literal("A");
        let b = Cell::literal("B");
        assert!(!row_match(
            &[a.clone(), a.clone()],
            &[a.clone(), b.clone()]
        ));
        assert!(!row_match(&[a.clone()], &[b]));
        assert!(row_match(&[a.clone(), a.clone()], &[a.clone(), a]));
    }

    #[test]
    fn identical_tables_score_one() {
        let t = iri_table(&["a", "b", "c", "d", "e"]);
        let score = assignment_f1(&t, &t);
        assert_eq!(score.f1, 1.0);
        assert_eq!(score.precision, 1.0);
        assert_eq!(score.recall, 1.0);
    }

    #[test]
    fn one_extra_wrong_row_scores_eight_ninths() {
        let gt = iri_table(&["a", "b", "c", "d"]);
        let pred = iri_table(&["a", "b", "c", "d", "wrong"]);
        let score = assignment_f1(&gt, &pred);
        assert!((score.precision - 0.8).abs() < F1_TOLERANCE);
        assert_eq!(score.recall, 1.0);
        assert!((score.f1 - 8.0 / 9.0).abs() < F1_TOLERANCE);
    }

    #[test]
    fn disjoint_tables_score_zero() {
        let score = assignment_f1(&iri_table(&["a", "b"]), &iri_table(&["c", "d"]));
        assert_eq!(score.f1, 0.0);
    }

    #[test]
    fn empty_prediction_scores_zero_against_rows() {
        let score = assignment_f1(&iri_table(&["a"]), &iri_table(&[]));
        assert_eq!(score.f1, 0.0);
        assert_eq!(score.precision, 0.0);
    }

    /// Exhaustive maximum matching by branch-and-bound, the oracle for
    /// the augmenting-path implementation.
    fn brute_force_matching(edges: &[Vec<bool>], right_len: usize) -> usize {
        fn go(left: usize, edges: &[Vec<bool>], used: &mut [bool]) -> usize {
            if left == edges.len() {
                return 0;
            }
            let mut best = go(left + 1, edges, used);
            for (right, slot) in used.iter().cloned().enumerate().collect::<Vec<_>>() {
                if !slot && edges[left][right] {
                    used[right] = true;
                    best = best.max(1 + go(left + 1, edges, used));
                    used[right] = false;
                }
            }
            best
        }
        go(0, edges, &mut vec![false; right_len])
    }

    #[test]
    fn matching_equals_brute_force_on_small_tables() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..300 {
            let gt_n = rng.gen_range(0..=8usize);
            let pred_n = rng.gen_range(0..=8usize);
            // Tiny alphabet so rows collide and matchings get dense.
            let table = |rng: &mut StdRng, n: usize| {
                iri_table(
                    &(0..n)
                        .map(|_| ["a", "b", "c"][rng.gen_range(0..3)])
                        .collect::<Vec<_>>(),
                )
            };
            let gt = table(&mut rng, gt_n);
            let pred = table(&mut rng, pred_n);
            let edges: Vec<Vec<bool>> = gt
                .rows
                .iter()
                .map(|g| pred.rows.iter().map(|p| row_match(g, p)).collect())
                .collect();
            let oracle = brute_force_matching(&edges, pred_n);
            let expected = if gt_n == 0 && pred_n == 0 {
                EvalScore::unit(1.0, ScorePath::Matched)
            } else {
                EvalScore::from_counts(oracle, pred_n, gt_n, ScorePath::Matched)
            };
            let actual = assignment_f1(&gt, &pred);
            assert!(
                (actual.f1 - expected.f1).abs() < F1_TOLERANCE,
                "gt={gt_n} pred={pred_n}: {} vs oracle {}",
                actual.f1,
                expected.f1
            );
        }
    }

    #[test]
    fn extra_column_never_lowers_the_score() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..100 {
            let table = |rng: &mut StdRng| {
                let rows = (0..rng.gen_range(1..=6usize))
                    .map(|_| {
                        (0..2)
                            .map(|_| Cell::literal(["x", "y", "z"][rng.gen_range(0..3)]))
                            .collect()
                    })
                    .collect();
                ResultTable::select(vec!["a".into(), "b".into()], rows)
            };
            let gt = table(&mut rng);
            let pred = table(&mut rng);
            let before = assignment_f1(&gt, &pred).f1;
            let mut widened = pred.clone();
            for row in &mut widened.rows {
                row.push(Cell::literal("a label"));
            }
            let after = assignment_f1(&gt, &widened).f1;
            assert!(after >= before - F1_TOLERANCE);
        }
    }

    #[test]
    fn numeric_forms_compare_equal() {
        let a = Cell::typed_literal("+5", "http://www.w3.org/2001/XMLSchema#integer");
        let b = Cell::typed_literal("5.0", "http://www.w3.org/2001/XMLSchema#decimal");
        assert!(row_match(&[a], &[b]));
        let c = Cell::literal("5");
        let d = Cell::typed_literal("5.00", "http://www.w3.org/2001/XMLSchema#double");
        assert!(row_match(&[c], &[d]));
        assert!(!row_match(&[Cell::literal("5")], &[Cell::literal("6")]));
    }

    #[test]
    fn dates_truncate_to_the_coarser_precision() {
        let date = Cell::typed_literal("2001-01-01", "http://www.w3.org/2001/XMLSchema#date");
        let stamp = Cell::typed_literal(
            "2001-01-01T00:00:00Z",
            "http://www.w3.org/2001/XMLSchema#dateTime",
        );
        assert!(row_match(&[date.clone()], &[stamp.clone()]));
        assert!(row_match(&[stamp.clone()], &[date.clone()]));
        let other_day = Cell::typed_literal("2001-01-02", "http://www.w3.org/2001/XMLSchema#date");
        assert!(!row_match(&[other_day], &[stamp.clone()]));
        // Same precision compares fully.
        let later = Cell::typed_literal(
            "2001-01-01T12:00:00Z",
            "http://www.w3.org/2001/XMLSchema#dateTime",
        );
        assert!(!row_match(&[stamp.clone()], &[later]));
        // Timezone spelling and fractional zeros do not matter.
        let spelled = Cell::typed_literal(
            "2001-01-01T00:00:00.000+00:00",
            "http://www.w3.org/2001/XMLSchema#dateTime",
        );
        assert!(row_match(&[stamp], &[spelled]));
    }

    #[test]
    fn language_tags_are_ignored() {
        let en = Cell::Literal {
            lexical: "cat".into(),
            datatype: None,
            lang: Some("en".into()),
        };
        let de = Cell::Literal {
            lexical: "cat".into(),
            datatype: None,
            lang: Some("de".into()),
        };
        assert!(row_match(&[en.clone()], &[de]));
        assert!(row_match(&[en], &[Cell::literal("cat")]));
    }

    #[test]
    fn unbound_cells_carry_no_requirement() {
        let gt = vec![Cell::iri("a"), Cell::Unbound];
        let pred = vec![Cell::iri("a")];
        assert!(row_match(&gt, &pred));
        assert!(row_match(&[Cell::Unbound], &[]));
    }

    #[test]
    fn blank_nodes_match_any_blank_node() {
        let g = Cell::Blank { id: "b0".into() };
        let p = Cell::Blank { id: "node17".into() };
        assert!(row_match(&[g.clone()], &[p]));
        assert!(!row_match(&[g], &[Cell::literal("b0")]));
    }

    #[test]
    fn ask_against_select_scores_by_nonemptiness() {
        let three = iri_table(&["a", "b", "c"]);
        let empty_pred = iri_table(&[]);
        assert_eq!(score_results(&ResultTable::ask(true), &three).f1, 1.0);
        assert_eq!(score_results(&ResultTable::ask(false), &empty_pred).f1, 1.0);
        assert_eq!(score_results(&ResultTable::ask(true), &empty_pred).f1, 0.0);
        // And with the prediction on the ASK side.
        assert_eq!(score_results(&three, &ResultTable::ask(true)).f1, 1.0);
        assert_eq!(score_results(&three, &ResultTable::ask(false)).f1, 0.0);
        for s in [
            score_results(&ResultTable::ask(true), &three),
            score_results(&three, &ResultTable::ask(true)),
        ] {
            assert_eq!(s.path, ScorePath::AskEquivalence);
        }
    }

    #[test]
    fn both_ask_compare_booleans() {
        assert_eq!(
            score_results(&ResultTable::ask(false), &ResultTable::ask(false)).f1,
            1.0
        );
        assert_eq!(
            score_results(&ResultTable::ask(false), &ResultTable::ask(true)).f1,
            0.0
        );
    }

    #[test]
    fn empty_ground_truth_select_is_excluded() {
        let gt = iri_table(&[]);
        let score = score_results(&gt, &iri_table(&["a"]));
        assert_eq!(score.path, ScorePath::Excluded);
        // An ASK ground truth is never excluded, even when false.
        let score = score_results(&ResultTable::ask(false), &iri_table(&[]));
        assert_eq!(score.path, ScorePath::AskEquivalence);
    }

    fn wide_table(n: usize, with_label: bool) -> ResultTable {
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![Cell::iri(format!("http://x.test/{i}"))];
                if with_label {
                    row.push(Cell::literal(format!("label {i}")));
                }
                row
            })
            .collect();
        ResultTable::select(vec!["x".to_string()], rows)
    }

    #[test]
    fn large_tables_fall_back_to_exact_scoring() {
        let at_cap = wide_table(ASSIGNMENT_ROW_CAP, false);
        assert_eq!(score_results(&at_cap, &at_cap).path, ScorePath::Matched);
        let over = wide_table(ASSIGNMENT_ROW_CAP + 1, false);
        let score = score_results(&over, &over);
        assert_eq!(score.path, ScorePath::ExactFallback);
        assert_eq!(score.f1, 1.0);
    }

    #[test]
    fn exact_fallback_is_strict_about_extra_columns() {
        let gt = wide_table(2000, false);
        let pred = wide_table(2000, true);
        let score = score_results(&gt, &pred);
        assert_eq!(score.path, ScorePath::ExactFallback);
        assert!(score.f1 < 1.0);
        // The assignment metric would have forgiven the label column.
        let small_gt = wide_table(5, false);
        let small_pred = wide_table(5, true);
        assert_eq!(score_results(&small_gt, &small_pred).f1, 1.0);
    }

    #[test]
    fn exact_fallback_half_overlap_scores_half() {
        let gt = ResultTable::select(
            vec!["x".to_string()],
            (0..2000)
                .map(|i| vec![Cell::iri(format!("http://x.test/{i}"))])
                .collect(),
        );
        let pred = ResultTable::select(
            vec!["x".to_string()],
            (1000..3000)
                .map(|i| vec![Cell::iri(format!("http://x.test/{i}"))])
                .collect(),
        );
        let score = score_results(&gt, &pred);
        assert!((score.f1 - 0.5).abs() < F1_TOLERANCE);
    }

    #[test]
    fn exact_fallback_ignores_column_order() {
        let ab = vec![Cell::literal("a"), Cell::literal("b")];
        let ba = vec![Cell::literal("b"), Cell::literal("a")];
        let gt = ResultTable::select(vec!["x".into(), "y".into()], vec![ab; 1200]);
        let pred = ResultTable::select(vec!["y".into(), "x".into()], vec![ba; 1200]);
        assert_eq!(score_results(&gt, &pred).f1, 1.0);
    }
}
