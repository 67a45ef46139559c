//! Typed tables: cell classification, field type inference, table parsing.
//!
//! Every other module reads these types. All functions here are pure and
//! total over their inputs; classification never fails, it only degrades to
//! [`CellKind::Text`].

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fixed spreadsheet error lexicon. Matched case-insensitively on the
/// trimmed cell text.
pub const ERROR_LEXICON: [&str; 8] = [
    "#REF!", "#DIV/0!", "#N/A", "#VALUE!", "#NAME?", "#NUM!", "#NULL!", "#####",
];

/// What a raw cell string was classified as.
#[derive(Debug, Clone, PartialEq)]
pub enum CellKind {
    Number(f64),
    Text,
    Blank,
    Error,
    /// Days since 1970-01-01.
    Date(i64),
}

/// A single cell: the raw text plus its classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub raw: String,
    pub kind: CellKind,
}

impl Cell {
    pub fn is_blank(&self) -> bool {
        matches!(self.kind, CellKind::Blank)
    }

    pub fn is_error(&self) -> bool {
        matches!(self.kind, CellKind::Error)
    }

    /// Numeric value for `Number` cells, `None` otherwise.
    pub fn number(&self) -> Option<f64> {
        match self.kind {
            CellKind::Number(v) => Some(v),
            _ => None,
        }
    }

    /// Canonical comparison key: numbers compare by value, dates by epoch
    /// day, everything else by trimmed raw text.
    pub fn value_key(&self) -> ValueKey {
        match self.kind {
            CellKind::Number(v) => ValueKey::Number(v.to_bits()),
            CellKind::Date(d) => ValueKey::Date(d),
            CellKind::Blank => ValueKey::Blank,
            _ => ValueKey::Text(self.raw.trim().to_string()),
        }
    }
}

/// Hashable identity of a cell value, used for frequency counting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKey {
    Number(u64),
    Date(i64),
    Text(String),
    Blank,
}

/// Inferred type of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    Numeric,
    String,
    DateTime,
}

impl FieldType {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldType::Numeric => "numeric",
            FieldType::String => "string",
            FieldType::DateTime => "datetime",
        }
    }
}

/// A logical column: header, cells and inferred type.
#[derive(Debug, Clone)]
pub struct Field {
    /// 0-based column position.
    pub index: usize,
    pub header: String,
    pub cells: Vec<Cell>,
    pub ftype: FieldType,
}

impl Field {
    /// Build a field from raw strings, classifying cells and inferring the type.
    pub fn from_raw(index: usize, header: &str, raw_cells: &[String]) -> Self {
        let cells: Vec<Cell> = raw_cells.iter().map(|r| classify_cell(r)).collect();
        let ftype = infer_field_type(&cells);
        Field {
            index,
            header: header.to_string(),
            cells,
            ftype,
        }
    }

    /// Values of all `Number` cells in row order.
    pub fn numbers(&self) -> Vec<f64> {
        self.cells.iter().filter_map(Cell::number).collect()
    }
}

/// A parsed table: ordered fields of equal length.
#[derive(Debug, Clone)]
pub struct Table {
    pub id: String,
    pub fields: Vec<Field>,
    pub n_rows: usize,
}

impl Table {
    pub fn field(&self, index: usize) -> Result<&Field> {
        self.fields.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.fields.len(),
        })
    }

    pub fn headers(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.header.clone()).collect()
    }

    /// Re-serialize to raw rows (the inverse of [`parse_table`] on
    /// rectangular input).
    pub fn to_rows(&self, include_header: bool) -> Vec<Vec<String>> {
        let mut rows = Vec::with_capacity(self.n_rows + usize::from(include_header));
        if include_header {
            rows.push(self.headers());
        }
        for r in 0..self.n_rows {
            rows.push(self.fields.iter().map(|f| f.cells[r].raw.clone()).collect());
        }
        rows
    }
}

/// Classify one raw cell string. Total and deterministic; kinds are assigned
/// in the order Blank > Error > Date > Number > Text.
pub fn classify_cell(raw: &str) -> Cell {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Cell {
            raw: raw.to_string(),
            kind: CellKind::Blank,
        };
    }
    let upper = trimmed.to_uppercase();
    if ERROR_LEXICON.contains(&upper.as_str()) {
        return Cell {
            raw: raw.to_string(),
            kind: CellKind::Error,
        };
    }
    if let Some(days) = parse_date(trimmed) {
        return Cell {
            raw: raw.to_string(),
            kind: CellKind::Date(days),
        };
    }
    if let Some(v) = parse_number(trimmed) {
        return Cell {
            raw: raw.to_string(),
            kind: CellKind::Number(v),
        };
    }
    Cell {
        raw: raw.to_string(),
        kind: CellKind::Text,
    }
}

/// Accepted date formats: `YYYY-MM-DD`, `MM/DD/YYYY` and `Mon YYYY`
/// (month abbreviation plus 4-digit year, day defaulting to 1).
fn parse_date(trimmed: &str) -> Option<i64> {
    if let Ok(d) = NaiveDate::parse_from_str(trimmed, "%Y-%m-%d") {
        return Some(epoch_days(d));
    }
    if trimmed.contains('/') {
        if let Ok(d) = NaiveDate::parse_from_str(trimmed, "%m/%d/%Y") {
            return Some(epoch_days(d));
        }
    }
    parse_month_year(trimmed)
}

fn epoch_days(d: NaiveDate) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    d.signed_duration_since(epoch).num_days()
}

fn parse_month_year(trimmed: &str) -> Option<i64> {
    const MONTHS: [&str; 12] = [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ];
    let mut parts = trimmed.split_whitespace();
    let mon = parts.next()?.to_lowercase();
    let year = parts.next()?;
    if parts.next().is_some() || year.len() != 4 {
        return None;
    }
    let month = MONTHS.iter().position(|m| mon.starts_with(m))? as u32 + 1;
    // Require the month token to be an abbreviation or full month name.
    if mon.len() > 9 || !mon.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let year: i32 = year.parse().ok()?;
    NaiveDate::from_ymd_opt(year, month, 1).map(epoch_days)
}

/// Number grammar: optional sign, optional currency symbol ($ € £), comma
/// thousands separators, optional `%` suffix that divides by 100. Must be
/// finite.
fn parse_number(trimmed: &str) -> Option<f64> {
    let mut s = trimmed;
    let mut negative = false;
    if let Some(rest) = s.strip_prefix('-') {
        negative = true;
        s = rest;
    } else if let Some(rest) = s.strip_prefix('+') {
        s = rest;
    }
    for cur in ['$', '€', '£'] {
        if let Some(rest) = s.strip_prefix(cur) {
            s = rest.trim_start();
            // Sign may also follow the currency symbol: "$-5".
            if !negative {
                if let Some(rest) = s.strip_prefix('-') {
                    negative = true;
                    s = rest;
                } else if let Some(rest) = s.strip_prefix('+') {
                    s = rest;
                }
            }
            break;
        }
    }
    let mut percent = false;
    if let Some(rest) = s.strip_suffix('%') {
        percent = true;
        s = rest.trim_end();
    }
    let cleaned: String = s.chars().filter(|c| *c != ',').collect();
    if cleaned.is_empty() {
        return None;
    }
    // f64::from_str accepts "inf"/"nan" words; only e/E may appear here.
    if cleaned
        .chars()
        .any(|c| c.is_ascii_alphabetic() && !matches!(c, 'e' | 'E'))
    {
        return None;
    }
    let v: f64 = cleaned.parse().ok()?;
    if !v.is_finite() {
        return None;
    }
    let v = if negative { -v } else { v };
    Some(if percent { v / 100.0 } else { v })
}

/// Infer a field's type from its classified cells: Numeric when at least 95%
/// of the non-blank, non-error cells are numbers, DateTime when at least 95%
/// are dates, String otherwise (including all-blank fields).
pub fn infer_field_type(cells: &[Cell]) -> FieldType {
    let mut n_num = 0usize;
    let mut n_date = 0usize;
    let mut denom = 0usize;
    for c in cells {
        match c.kind {
            CellKind::Blank | CellKind::Error => {}
            CellKind::Number(_) => {
                n_num += 1;
                denom += 1;
            }
            CellKind::Date(_) => {
                n_date += 1;
                denom += 1;
            }
            CellKind::Text => denom += 1,
        }
    }
    if denom == 0 {
        return FieldType::String;
    }
    // 95% threshold as the exact integer comparison n/denom >= 19/20.
    if n_num * 20 >= denom * 19 {
        FieldType::Numeric
    } else if n_date * 20 >= denom * 19 {
        FieldType::DateTime
    } else {
        FieldType::String
    }
}

/// Parse raw rows into a table. Ragged rows are padded with empty strings.
/// When `header_in_first_row` is false, headers are synthesized as
/// `col_0`, `col_1`, ...
pub fn parse_table(rows: &[Vec<String>], header_in_first_row: bool, id: &str) -> Result<Table> {
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("table '{id}' has no rows")));
    }
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    if n_cols == 0 {
        return Err(Error::EmptyInput(format!("table '{id}' has no columns")));
    }
    let blank = String::new();
    let cell_at = |row: &Vec<String>, c: usize| row.get(c).unwrap_or(&blank).clone();

    let (headers, data_rows): (Vec<String>, &[Vec<String>]) = if header_in_first_row {
        (
            (0..n_cols).map(|c| cell_at(&rows[0], c)).collect(),
            &rows[1..],
        )
    } else {
        ((0..n_cols).map(|c| format!("col_{c}")).collect(), rows)
    };

    let fields: Vec<Field> = (0..n_cols)
        .map(|c| {
            let raw: Vec<String> = data_rows.iter().map(|r| cell_at(r, c)).collect();
            Field::from_raw(c, &headers[c], &raw)
        })
        .collect();
    Ok(Table {
        id: id.to_string(),
        n_rows: data_rows.len(),
        fields,
    })
}

/// Read a CSV file (RFC-4180 quoting) into a table.
pub fn read_csv_path(path: &Path, header_in_first_row: bool, id: &str) -> Result<Table> {
    let file = std::fs::File::open(path)?;
    read_csv(file, header_in_first_row, id)
}

/// Read CSV from any reader into a table.
pub fn read_csv<R: Read>(reader: R, header_in_first_row: bool, id: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    parse_table(&rows, header_in_first_row, id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strings(raw: &[&str]) -> Vec<String> {
        raw.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn classify_blank() {
        assert_eq!(classify_cell("").kind, CellKind::Blank);
        assert_eq!(classify_cell("   ").kind, CellKind::Blank);
        assert_eq!(classify_cell("\t").kind, CellKind::Blank);
    }

    #[test]
    fn classify_error_lexicon() {
        assert_eq!(classify_cell("#REF!").kind, CellKind::Error);
        assert_eq!(classify_cell("#div/0!").kind, CellKind::Error);
        assert_eq!(classify_cell(" #N/A ").kind, CellKind::Error);
        assert_eq!(classify_cell("#####").kind, CellKind::Error);
        assert_eq!(classify_cell("#REF").kind, CellKind::Text);
    }

    #[test]
    fn classify_numbers() {
        assert_eq!(classify_cell("76").kind, CellKind::Number(76.0));
        assert_eq!(classify_cell("-3.5").kind, CellKind::Number(-3.5));
        assert_eq!(classify_cell("+2").kind, CellKind::Number(2.0));
        assert_eq!(classify_cell("1,234.5").kind, CellKind::Number(1234.5));
        assert_eq!(classify_cell("50%").kind, CellKind::Number(0.5));
        assert_eq!(classify_cell("$1,200").kind, CellKind::Number(1200.0));
        assert_eq!(classify_cell("€5").kind, CellKind::Number(5.0));
        assert_eq!(classify_cell("£-2").kind, CellKind::Number(-2.0));
        assert_eq!(classify_cell("1e3").kind, CellKind::Number(1000.0));
        assert_eq!(classify_cell("inf").kind, CellKind::Text);
        assert_eq!(classify_cell("NaN").kind, CellKind::Text);
    }

    #[test]
    fn classify_dates() {
        assert_eq!(classify_cell("2021-01-03").kind, CellKind::Date(18630));
        assert_eq!(classify_cell("1970-01-01").kind, CellKind::Date(0));
        assert_eq!(classify_cell("01/02/1970").kind, CellKind::Date(1));
        assert_eq!(classify_cell("Jan 1970").kind, CellKind::Date(0));
        assert_eq!(classify_cell("March 2020").kind, CellKind::Date(18322));
        assert_eq!(classify_cell("13/01/2020").kind, CellKind::Text); // no month 13
        assert_eq!(classify_cell("2020-02-30").kind, CellKind::Text);
    }

    #[test]
    fn infer_types() {
        let numeric: Vec<Cell> = ["85", "76", "92"]
            .iter()
            .map(|s| classify_cell(s))
            .collect();
        assert_eq!(infer_field_type(&numeric), FieldType::Numeric);

        let text: Vec<Cell> = ["ACCEPTED", "Unknown", "ACCEPTED"]
            .iter()
            .map(|s| classify_cell(s))
            .collect();
        assert_eq!(infer_field_type(&text), FieldType::String);

        let dates: Vec<Cell> = ["2021-01-03", "2021-02-07", ""]
            .iter()
            .map(|s| classify_cell(s))
            .collect();
        assert_eq!(infer_field_type(&dates), FieldType::DateTime);

        let all_blank: Vec<Cell> = ["", " "].iter().map(|s| classify_cell(s)).collect();
        assert_eq!(infer_field_type(&all_blank), FieldType::String);

        // Errors and blanks do not count against the 95% majority.
        let noisy: Vec<Cell> = ["1", "2", "3", "#REF!", ""]
            .iter()
            .map(|s| classify_cell(s))
            .collect();
        assert_eq!(infer_field_type(&noisy), FieldType::Numeric);

        // 19 numbers and 1 text is exactly 95%.
        let mut borderline: Vec<Cell> = (0..19).map(|i| classify_cell(&i.to_string())).collect();
        borderline.push(classify_cell("x"));
        assert_eq!(infer_field_type(&borderline), FieldType::Numeric);
        borderline.push(classify_cell("y"));
        assert_eq!(infer_field_type(&borderline), FieldType::String);
    }

    #[test]
    fn parse_table_basics() {
        let rows = vec![
            strings(&["Round 1"]),
            strings(&["9.5"]),
            strings(&["9.8"]),
            strings(&["9.1"]),
        ];
        let t = parse_table(&rows, true, "t1").unwrap();
        assert_eq!(t.fields.len(), 1);
        assert_eq!(t.n_rows, 3);
        assert_eq!(t.fields[0].ftype, FieldType::Numeric);
        assert_eq!(t.fields[0].header, "Round 1");

        let t = parse_table(&[strings(&["a", "b"])], true, "t2").unwrap();
        assert_eq!(t.fields.len(), 2);
        assert_eq!(t.n_rows, 0);

        let t = parse_table(&[strings(&["x", "1"]), strings(&["y", "2"])], false, "t3").unwrap();
        assert_eq!(t.headers(), vec!["col_0", "col_1"]);
        assert_eq!(t.n_rows, 2);
    }

    #[test]
    fn parse_table_errors_and_padding() {
        assert!(matches!(
            parse_table(&[], true, "t"),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            parse_table(&[vec![], vec![]], true, "t"),
            Err(Error::EmptyInput(_))
        ));
        let t = parse_table(&[strings(&["a", "b"]), strings(&["1"])], true, "t").unwrap();
        assert_eq!(t.fields[1].cells[0].kind, CellKind::Blank);
    }

    #[test]
    fn csv_roundtrip() {
        let data = "name,score\nalice,10\nbob,\"1,5\"\n";
        let t = read_csv(data.as_bytes(), true, "c").unwrap();
        assert_eq!(t.n_rows, 2);
        assert_eq!(t.fields[1].cells[1].raw, "1,5");
    }

    proptest! {
        #[test]
        fn classify_total_and_idempotent(raw in ".{0,40}") {
            let once = classify_cell(&raw);
            let twice = classify_cell(&once.raw);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn infer_permutation_invariant(mut raws in proptest::collection::vec("[a-z0-9.#/ -]{0,8}", 1..20), seed in 0u64..1000) {
            let cells: Vec<Cell> = raws.iter().map(|s| classify_cell(s)).collect();
            let before = infer_field_type(&cells);
            // Deterministic shuffle driven by the seed.
            let n = raws.len();
            for i in 0..n {
                let j = ((seed as usize).wrapping_mul(31).wrapping_add(i * 7)) % n;
                raws.swap(i, j);
            }
            let cells: Vec<Cell> = raws.iter().map(|s| classify_cell(s)).collect();
            prop_assert_eq!(before, infer_field_type(&cells));
        }

        #[test]
        fn parse_then_serialize_roundtrip(rows in proptest::collection::vec(proptest::collection::vec("[a-zA-Z0-9 ]{0,6}", 3), 1..8)) {
            let t = parse_table(&rows, true, "rt").unwrap();
            prop_assert_eq!(t.to_rows(true), rows);
        }
    }
}
