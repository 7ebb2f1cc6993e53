//! Bounded text rendering of result tables.
//!
//! Tables with more than 10 rows show the first five and last five rows
//! with an ellipsis row in between; the same rule applies column-wise.
//! The header is always shown and a footer states the full size.

use crate::prefix::{PrefixTable, WELL_KNOWN_VOCAB};

use super::{Cell, ResultTable};

const ROW_LIMIT: usize = 10;
const COL_LIMIT: usize = 10;
const HEAD: usize = 5;
const TAIL: usize = 5;
const ELLIPSIS: &str = "...";
const SEPARATOR: &str = " | ";

pub(crate) fn shorten_iri(iri: &str, prefixes: &PrefixTable) -> String {
    if let Some(short) = prefixes.shorten(iri) {
        return short;
    }
    for (prefix, base) in WELL_KNOWN_VOCAB {
        if let Some(local) = iri.strip_prefix(base) {
            if !local.is_empty() && !local.contains('/') {
                return format!("{prefix}:{local}");
            }
        }
    }
    format!("<{iri}>")
}

fn is_string_datatype(datatype: &str) -> bool {
    datatype == "http://www.w3.org/2001/XMLSchema#string"
        || datatype == "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString"
}

fn cell_text(cell: &Cell, prefixes: &PrefixTable) -> String {
    match cell {
        Cell::Iri { iri } => shorten_iri(iri, prefixes),
        Cell::Literal {
            lexical, datatype, ..
        } => match datatype {
            Some(dt) if !is_string_datatype(dt) => {
                format!("{lexical}^^{}", shorten_iri(dt, prefixes))
            }
            _ => lexical.clone(),
        },
        Cell::Blank { id } => format!("_:{id}"),
        Cell::Unbound => "-".to_string(),
    }
}

/// Restrict a sequence of rendered cells to the column rule.
fn clip_columns(cells: Vec<String>, total_cols: usize) -> Vec<String> {
    if total_cols <= COL_LIMIT || cells.len() <= COL_LIMIT {
        return cells;
    }
    let mut clipped = Vec::with_capacity(HEAD + 1 + TAIL);
    clipped.extend(cells[..HEAD].iter().cloned());
    clipped.push(ELLIPSIS.to_string());
    clipped.extend(cells[cells.len() - TAIL..].iter().cloned());
    clipped
}

fn counted(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word} total")
    } else {
        format!("{n} {word}s total")
    }
}

/// Render a result table as bounded text. Pure in its input: the same
/// table always yields byte-identical output.
pub fn render_table(table: &ResultTable) -> String {
    if let Some(value) = table.is_ask {
        return format!("ASK result: {value}");
    }

    let mut lines = Vec::new();
    let header: Vec<String> = table.variables.iter().map(|v| format!("?{v}")).collect();
    lines.push(clip_columns(header, table.total_cols).join(SEPARATOR));

    let render_row = |row: &Vec<Cell>| -> String {
        let cells: Vec<String> = row.iter().map(|c| cell_text(c, &table.prefixes)).collect();
        clip_columns(cells, table.total_cols).join(SEPARATOR)
    };

    if table.total_rows > ROW_LIMIT && table.rows.len() > ROW_LIMIT {
        for row in &table.rows[..HEAD] {
            lines.push(render_row(row));
        }
        lines.push(ELLIPSIS.to_string());
        for row in &table.rows[table.rows.len() - TAIL..] {
            lines.push(render_row(row));
        }
    } else {
        for row in &table.rows {
            lines.push(render_row(row));
        }
        if table.total_rows > table.rows.len() {
            lines.push(ELLIPSIS.to_string());
        }
    }

    lines.push(format!(
        "{}, {}",
        counted(table.total_rows, "row"),
        counted(table.total_cols, "column")
    ));
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered_table(rows: usize, cols: usize) -> ResultTable {
        let variables: Vec<String> = (0..cols).map(|c| format!("v{c}")).collect();
        let data: Vec<Vec<Cell>> = (0..rows)
            .map(|r| {
                (0..cols)
                    .map(|c| Cell::literal(format!("r{r}c{c}")))
                    .collect()
            })
            .collect();
        ResultTable::select(variables, data)
    }

    #[test]
    fn twelve_rows_first_and_last_five() {
        let rendered = render_table(&numbered_table(12, 1));
        let lines: Vec<&str> = rendered.lines().collect();
        // header + 5 + ellipsis + 5 + footer
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "?v0");
        assert_eq!(lines[1], "r0c0");
        assert_eq!(lines[5], "r4c0");
        assert_eq!(lines[6], "...");
        assert_eq!(lines[7], "r7c0");
        assert_eq!(lines[11], "r11c0");
        assert_eq!(lines[12], "12 rows total, 1 column total");
    }

    #[test]
    fn ten_rows_rendered_in_full() {
        let rendered = render_table(&numbered_table(10, 10));
        assert!(!rendered.contains("..."));
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines.len(), 12); // header + 10 + footer
        assert_eq!(lines[11], "10 rows total, 10 columns total");
    }

    #[test]
    fn twelve_columns_clipped() {
        let rendered = render_table(&numbered_table(2, 12));
        let lines: Vec<&str> = rendered.lines().collect();
        let header: Vec<&str> = lines[0].split(" | ").collect();
        assert_eq!(header.len(), 11);
        assert_eq!(header[5], "...");
        assert_eq!(header[0], "?v0");
        assert_eq!(header[10], "?v11");
        let row: Vec<&str> = lines[1].split(" | ").collect();
        assert_eq!(row.len(), 11);
        assert_eq!(row[4], "r0c4");
        assert_eq!(row[6], "r0c7");
    }

    #[test]
    fn never_more_than_eleven_data_rows_or_columns() {
        for rows in [0usize, 1, 9, 10, 11, 12, 30, 100] {
            for cols in [1usize, 9, 10, 11, 12, 25] {
                let rendered = render_table(&numbered_table(rows, cols));
                let lines: Vec<&str> = rendered.lines().collect();
                let data_lines = lines.len() - 2; // header + footer
                assert!(data_lines <= ROW_LIMIT + 1, "{rows}x{cols}: {data_lines}");
                for line in &lines[..lines.len() - 1] {
                    assert!(line.split(" | ").count() <= COL_LIMIT + 1);
                }
            }
        }
    }

    #[test]
    fn ask_rendering() {
        assert_eq!(render_table(&ResultTable::ask(true)), "ASK result: true");
        assert_eq!(render_table(&ResultTable::ask(false)), "ASK result: false");
    }

    #[test]
    fn byte_identical_across_calls() {
        let t = numbered_table(12, 12);
        assert_eq!(render_table(&t), render_table(&t));
    }

    #[test]
    fn cell_forms() {
        let prefixes = PrefixTable::from_pairs(vec![("wd", "http://www.wikidata.org/entity/")]);
        let t = ResultTable::select(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![vec![
                Cell::iri("http://www.wikidata.org/entity/Q42"),
                Cell::typed_literal("5", "http://www.w3.org/2001/XMLSchema#integer"),
                Cell::Unbound,
                Cell::Blank { id: "b0".into() },
            ]],
        )
        .with_prefixes(prefixes);
        let rendered = render_table(&t);
        assert!(rendered.contains("wd:Q42"));
        assert!(rendered.contains("5^^xsd:integer"));
        assert!(rendered.contains("-"));
        assert!(rendered.contains("_:b0"));
    }
}
