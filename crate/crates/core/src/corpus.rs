//! Corpus interchange format (JSONL tables and analysis records), the
//! preparation pipeline (record merging, coverage filtering, schema-based
//! deduplication and down-sampling), and a seeded synthetic corpus
//! generator that plants patterns whose golden labels follow from the
//! signature rules.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::semantics::{record_coverage, ChartType, OperationCf};
use crate::table::{Field, Table};
use crate::{Error, Result};

/// A typed parameter value in a conditional-formatting record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ParamValue {
    Number(f64),
    Text(String),
    Blank,
}

impl ParamValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            ParamValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn display(&self) -> String {
        match self {
            ParamValue::Number(v) => format!("{v}"),
            ParamValue::Text(t) => t.clone(),
            ParamValue::Blank => "(blank)".to_string(),
        }
    }
}

/// Total order for tie-breaking and canonical parameter ordering: numbers
/// by value, then texts lexicographically, then the blank sentinel.
pub fn param_order(a: &ParamValue, b: &ParamValue) -> Ordering {
    use ParamValue::*;
    match (a, b) {
        (Number(x), Number(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
        (Text(x), Text(y)) => x.cmp(y),
        (Blank, Blank) => Ordering::Equal,
        (Number(_), _) => Ordering::Less,
        (_, Number(_)) => Ordering::Greater,
        (Text(_), Blank) => Ordering::Less,
        (Blank, Text(_)) => Ordering::Greater,
    }
}

/// One analysis record: a conditional-formatting rule on a field, or a
/// chart on a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalysisRecord {
    Cf {
        table_id: String,
        field_index: usize,
        operation: OperationCf,
        parameters: Vec<ParamValue>,
        /// Fraction of the field's cells the condition selects.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coverage: Option<f64>,
    },
    Chart {
        table_id: String,
        chart_type: ChartType,
        #[serde(default)]
        x_fields: Vec<usize>,
        y_fields: Vec<usize>,
    },
}

impl AnalysisRecord {
    pub fn table_id(&self) -> &str {
        match self {
            AnalysisRecord::Cf { table_id, .. } | AnalysisRecord::Chart { table_id, .. } => {
                table_id
            }
        }
    }

    pub fn is_cf(&self) -> bool {
        matches!(self, AnalysisRecord::Cf { .. })
    }
}

/// A table in the interchange format: headers, declared field types and raw
/// rows. `types` is informational (re-inferred on load).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDoc {
    pub id: String,
    pub headers: Vec<String>,
    pub types: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TableDoc {
    /// Build the doc from per-field columns, inferring the type tags.
    pub fn from_columns(id: &str, headers: Vec<String>, columns: Vec<Vec<String>>) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == columns[0].len()));
        let fields: Vec<Field> = columns
            .iter()
            .enumerate()
            .map(|(i, col)| Field::from_raw(i, &headers[i], col))
            .collect();
        let types = fields
            .iter()
            .map(|f| f.ftype.as_str().to_string())
            .collect();
        let n_rows = columns.first().map(Vec::len).unwrap_or(0);
        let rows = (0..n_rows)
            .map(|r| columns.iter().map(|c| c[r].clone()).collect())
            .collect();
        TableDoc {
            id: id.to_string(),
            headers,
            types,
            rows,
        }
    }

    /// Parse into a typed [`Table`].
    pub fn to_table(&self) -> Result<Table> {
        if self.headers.is_empty() {
            return Err(Error::EmptyInput(format!(
                "table '{}' has no columns",
                self.id
            )));
        }
        let fields: Vec<Field> = self
            .headers
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let col: Vec<String> = self
                    .rows
                    .iter()
                    .map(|r| r.get(i).cloned().unwrap_or_default())
                    .collect();
                Field::from_raw(i, h, &col)
            })
            .collect();
        Ok(Table {
            id: self.id.clone(),
            n_rows: self.rows.len(),
            fields,
        })
    }

    /// Canonical schema key: lowercased headers plus field types, in order.
    pub fn schema_key(&self) -> String {
        let headers: Vec<String> = self.headers.iter().map(|h| h.to_lowercase()).collect();
        format!("{}||{}", headers.join("\u{1f}"), self.types.join(","))
    }
}

// ---------------------------------------------------------------------------
// JSONL I/O
// ---------------------------------------------------------------------------

/// First line of every JSONL artifact: format tag plus the run's seed and
/// effective config, for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonlHeader {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl JsonlHeader {
    pub fn new(format: &str) -> Self {
        JsonlHeader {
            format: format.to_string(),
            version: 1,
            seed: None,
            config: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = Some(config);
        self
    }
}

fn open_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = std::fs::File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(flate2::write::GzEncoder::new(
            file,
            flate2::Compression::default(),
        )))
    } else {
        Ok(Box::new(std::io::BufWriter::new(file)))
    }
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(std::io::BufReader::new(
            flate2::read::GzDecoder::new(file),
        )))
    } else {
        Ok(Box::new(std::io::BufReader::new(file)))
    }
}

fn write_jsonl<T: Serialize>(path: &Path, header: &JsonlHeader, items: &[T]) -> Result<()> {
    let mut w = open_writer(path)?;
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = open_reader(path)?;
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // Header lines carry a "format" tag and are skipped.
        if serde_json::from_str::<JsonlHeader>(&line).is_ok_and(|h| !h.format.is_empty())
            && serde_json::from_str::<T>(&line).is_err()
        {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_tables_jsonl(path: &Path, header: &JsonlHeader, tables: &[TableDoc]) -> Result<()> {
    write_jsonl(path, header, tables)
}

pub fn read_tables_jsonl(path: &Path) -> Result<Vec<TableDoc>> {
    read_jsonl(path)
}

pub fn write_records_jsonl(
    path: &Path,
    header: &JsonlHeader,
    records: &[AnalysisRecord],
) -> Result<()> {
    write_jsonl(path, header, records)
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<AnalysisRecord>> {
    read_jsonl(path)
}

// ---------------------------------------------------------------------------
// Preparation pipeline
// ---------------------------------------------------------------------------

fn record_key(r: &AnalysisRecord) -> String {
    match r {
        AnalysisRecord::Cf {
            table_id,
            field_index,
            operation,
            parameters,
            ..
        } => {
            let mut params = parameters.clone();
            params.sort_by(param_order);
            format!(
                "cf|{table_id}|{field_index}|{}|{}",
                operation.name(),
                serde_json::to_string(&params).expect("serializable")
            )
        }
        AnalysisRecord::Chart {
            table_id,
            chart_type,
            x_fields,
            y_fields,
        } => {
            let mut x = x_fields.clone();
            let mut y = y_fields.clone();
            x.sort_unstable();
            y.sort_unstable();
            format!("chart|{table_id}|{}|{x:?}|{y:?}", chart_type.name())
        }
    }
}

/// Collapse records that apply the same analysis to the same field (or the
/// same chart to the same table). The first occurrence is kept; coverage
/// becomes the maximum over the merged group. Idempotent.
pub fn merge_records(records: &[AnalysisRecord]) -> Vec<AnalysisRecord> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out: Vec<AnalysisRecord> = Vec::new();
    for r in records {
        let key = record_key(r);
        match seen.get(&key) {
            Some(&i) => {
                if let (
                    AnalysisRecord::Cf {
                        coverage: Some(new_cov),
                        ..
                    },
                    AnalysisRecord::Cf { coverage, .. },
                ) = (r, &mut out[i])
                {
                    let merged = coverage.map_or(*new_cov, |c| c.max(*new_cov));
                    *coverage = Some(merged);
                }
            }
            None => {
                seen.insert(key, out.len());
                out.push(r.clone());
            }
        }
    }
    out
}

/// Drop conditional-formatting records whose coverage falls below the
/// threshold. Missing coverage is computed from the table; records whose
/// table is absent are dropped. Chart records pass through untouched.
pub fn filter_by_coverage(
    records: Vec<AnalysisRecord>,
    tables: &BTreeMap<String, Table>,
    threshold: f64,
) -> Vec<AnalysisRecord> {
    records
        .into_iter()
        .filter(|r| match r {
            AnalysisRecord::Chart { .. } => true,
            AnalysisRecord::Cf {
                table_id,
                field_index,
                operation,
                parameters,
                coverage,
            } => {
                let cov = coverage.or_else(|| {
                    tables
                        .get(table_id)
                        .and_then(|t| t.fields.get(*field_index))
                        .map(|f| record_coverage(*operation, parameters, f))
                });
                match cov {
                    Some(c) => c >= threshold,
                    None => false,
                }
            }
        })
        .collect()
}

/// Group tables by schema, drop exact duplicates, and keep a seeded uniform
/// sample of at most `max_per_schema` tables per schema group. Output
/// preserves the input order of the survivors.
pub fn dedup_and_sample(tables: Vec<TableDoc>, max_per_schema: usize, seed: u64) -> Vec<TableDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut content_seen: BTreeSet<String> = BTreeSet::new();
    let mut unique_idx: Vec<usize> = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        let content = serde_json::to_string(&(&t.headers, &t.rows)).expect("serializable");
        if content_seen.insert(content) {
            unique_idx.push(i);
        }
    }

    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in &unique_idx {
        groups.entry(tables[i].schema_key()).or_default().push(i);
    }

    let mut keep: BTreeSet<usize> = BTreeSet::new();
    for (_, members) in groups {
        if members.len() <= max_per_schema {
            keep.extend(members);
        } else {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            keep.extend(shuffled.into_iter().take(max_per_schema));
        }
    }

    tables
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, t)| t)
        .collect()
}

/// Drop records whose table id no longer exists.
pub fn drop_dangling_records(
    records: Vec<AnalysisRecord>,
    tables: &[TableDoc],
) -> Vec<AnalysisRecord> {
    let ids: BTreeSet<&str> = tables.iter().map(|t| t.id.as_str()).collect();
    records
        .into_iter()
        .filter(|r| ids.contains(r.table_id()))
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

/// Specification for [`generate_synthetic`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_tables: usize,
    pub rows_min: usize,
    pub rows_max: usize,
    pub seed: u64,
    /// Relative weights per pattern, keyed by operation name or chart type
    /// name. Defaults follow the observed operation distribution of public
    /// conditional-formatting corpora, plus an even chart share.
    pub pattern_mix: BTreeMap<String, f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_tables: 100,
            rows_min: 8,
            rows_max: 16,
            seed: 7,
            pattern_mix: default_pattern_mix(),
        }
    }
}

/// Default mix: Equal-family most frequent, Color Scale second, then
/// Less/Greater Than, with the remaining operations in the long tail.
pub fn default_pattern_mix() -> BTreeMap<String, f64> {
    let mut mix = BTreeMap::new();
    for (k, w) in [
        ("EqualContains", 28.0),
        ("ColorScale", 24.8),
        ("LessGreaterThan", 16.3),
        ("IsBlank", 7.4),
        ("EqualSet", 6.9),
        ("PartitionSet", 5.9),
        ("Between", 3.6),
        ("IsError", 2.6),
        ("DataBar", 2.5),
        ("TopBottomK", 1.1),
        ("IsDuplicate", 0.8),
        ("IconSet", 0.24),
        ("bar", 6.0),
        ("line", 6.0),
        ("scatter", 6.0),
        ("pie", 6.0),
    ] {
        mix.insert(k.to_string(), w);
    }
    mix
}

/// A generated labeled corpus.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub tables: Vec<TableDoc>,
    pub records: Vec<AnalysisRecord>,
}

const SYLLABLES: [&str; 20] = [
    "bar", "den", "fol", "gim", "hax", "jor", "kel", "lam", "mir", "nok", "pra", "qui", "ros",
    "sil", "tov", "ulm", "vex", "wib", "yal", "zon",
];

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..n {
        w.push_str(SYLLABLES[rng.gen_range(0..SYLLABLES.len())]);
    }
    let mut chars = w.chars();
    let first = chars.next().expect("non-empty").to_uppercase().to_string();
    format!("{first}{}", chars.as_str())
}

fn distinct_words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = random_word(rng);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

/// Sample `k` distinct integers from `lo..=hi` (requires enough room).
fn distinct_ints(rng: &mut ChaCha8Rng, lo: i64, hi: i64, k: usize) -> Vec<i64> {
    debug_assert!((hi - lo + 1) as usize >= k);
    let mut pool: Vec<i64> = (lo..=hi).collect();
    pool.shuffle(rng);
    pool.truncate(k);
    pool
}

struct PatternField {
    header: String,
    cells: Vec<String>,
    record: Option<(OperationCf, Vec<ParamValue>)>,
}

fn gen_is_error(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "status_code",
            "lookup_result",
            "ref_check",
            "formula_out",
            "calc_result",
        ],
    );
    let n_err = rng.gen_range(1..=(n / 5).max(1));
    let mut cells: Vec<String> = (0..n)
        .map(|_| rng.gen_range(1..=100i64).to_string())
        .collect();
    for i in rand::seq::index::sample(rng, n, n_err) {
        cells[i] = "#REF!".to_string();
    }
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((
            OperationCf::IsError,
            vec![ParamValue::Text("#REF!".to_string())],
        )),
    }
}

fn gen_is_blank(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "optional_note",
            "secondary_contact",
            "middle_name",
            "fax_number",
            "apt_suite",
        ],
    );
    let n_blank = rng.gen_range(1..=(n / 4).max(1));
    let mut cells: Vec<String> = (0..n).map(|_| random_word(rng)).collect();
    for i in rand::seq::index::sample(rng, n, n_blank) {
        cells[i] = String::new();
    }
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((OperationCf::IsBlank, vec![ParamValue::Blank])),
    }
}

fn gen_is_duplicate(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "owner_name",
            "assignee",
            "editor_tag",
            "reviewer_id",
            "author_code",
        ],
    );
    // Two repeated values with different counts plus distinct singletons.
    let a = (2 * n / 5).max(2);
    let b = (a - 1).max(2);
    let rest = n.saturating_sub(a + b).max(1);
    let words = distinct_words(rng, 2 + rest);
    let mut cells: Vec<String> = Vec::with_capacity(n);
    cells.extend(std::iter::repeat_with(|| words[0].clone()).take(a));
    cells.extend(std::iter::repeat_with(|| words[1].clone()).take(b));
    cells.extend(words[2..].iter().cloned());
    cells.truncate(n);
    while cells.len() < n {
        cells.push(words[0].clone());
    }
    cells.shuffle(rng);
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((OperationCf::IsDuplicate, vec![])),
    }
}

fn gen_mean_split(
    rng: &mut ChaCha8Rng,
    n: usize,
    vocab_check: &dyn Fn(f64) -> bool,
) -> PatternField {
    let header = pick(
        rng,
        &[
            "attendance_pct",
            "weight_kg",
            "temp_reading",
            "pressure_psi",
            "humidity_index",
        ],
    );
    let center = loop {
        let c = rng.gen_range(13..=97i64);
        if !vocab_check(c as f64) {
            break c;
        }
    };
    let pairs = n / 2;
    let d_hi = (pairs as i64 + 2).max(12).min(center - 1);
    let offsets = distinct_ints(rng, 1, d_hi, pairs);
    let mut values: Vec<i64> = Vec::with_capacity(2 * pairs);
    for d in offsets {
        values.push(center - d);
        values.push(center + d);
    }
    let mut cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    if n % 2 == 1 {
        cells.push(String::new());
    }
    cells.shuffle(rng);
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((
            OperationCf::LessGreaterThan,
            vec![ParamValue::Number(center as f64)],
        )),
    }
}

fn gen_top_k(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "final_score",
            "round_points",
            "match_total",
            "judge_average",
            "race_points",
        ],
    );
    let hi = 50 + 3 * n as i64;
    let values = distinct_ints(rng, 50, hi, n);
    let cells = values.iter().map(|v| v.to_string()).collect();
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((OperationCf::TopBottomK, vec![ParamValue::Number(3.0)])),
    }
}

fn gen_between(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "price_band",
            "fee_range",
            "budget_window",
            "cost_bracket",
            "quote_spread",
        ],
    );
    // Bounds are round cell values; 30/60 are avoided (empirical numbers).
    let bound_pool = [20i64, 40, 70];
    let ai = rng.gen_range(0..bound_pool.len() - 1);
    let bi = rng.gen_range(ai + 1..bound_pool.len());
    let (a, b) = (bound_pool[ai], bound_pool[bi]);
    let mut values = vec![a, b, a - rng.gen_range(3..=8), b + rng.gen_range(3..=8)];
    let mut pool: Vec<i64> = (11..=89)
        .filter(|v| !values.contains(v) && *v % 10 != 0)
        .collect();
    pool.shuffle(rng);
    values.extend(pool.into_iter().take(n.saturating_sub(values.len())));
    values.truncate(n);
    let mut cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    while cells.len() < n {
        cells.push(String::new());
    }
    cells.shuffle(rng);
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((
            OperationCf::Between,
            vec![ParamValue::Number(a as f64), ParamValue::Number(b as f64)],
        )),
    }
}

fn gen_status(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "review_state",
            "approval_flag",
            "screening_result",
            "application_status",
            "audit_state",
        ],
    );
    let meaningful = random_word(rng).to_uppercase();
    let token = pick(rng, &["Unknown", "N/A", "None", "TBD", "Pending"]);
    let b = rng.gen_range(1..=(n / 4).max(1));
    let a = n - b;
    let mut cells: Vec<String> = Vec::with_capacity(n);
    cells.extend(std::iter::repeat_with(|| meaningful.clone()).take(a));
    cells.extend(std::iter::repeat_with(|| token.to_string()).take(b));
    cells.shuffle(rng);
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((
            OperationCf::EqualContains,
            vec![ParamValue::Text(meaningful)],
        )),
    }
}

fn gen_equal_set(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "tier_group",
            "grade_band",
            "class_split",
            "bucket_pair",
            "risk_split",
        ],
    );
    // Two dominant values with equal counts; the remainder are singletons so
    // both dominants share the top frequency.
    let n_single = if n.is_multiple_of(2) { 2 } else { 3 };
    let a = (n - n_single) / 2;
    let words = distinct_words(rng, 2 + n_single);
    let mut cells: Vec<String> = Vec::with_capacity(n);
    cells.extend(std::iter::repeat_with(|| words[0].clone()).take(a));
    cells.extend(std::iter::repeat_with(|| words[1].clone()).take(a));
    cells.extend(words[2..].iter().cloned());
    cells.shuffle(rng);
    let mut params = vec![
        ParamValue::Text(words[0].clone()),
        ParamValue::Text(words[1].clone()),
    ];
    params.sort_by(param_order);
    PatternField {
        header: header.to_string(),
        cells,
        record: Some((OperationCf::EqualSet, params)),
    }
}

/// Asymmetric numeric field whose mean and midpoint differ, are not cell
/// values, and are not empirical numbers; used for the gradient operations.
fn gen_gradient(
    rng: &mut ChaCha8Rng,
    n: usize,
    lo_base: i64,
    op: OperationCf,
    headers: &[&str],
    vocab_check: &dyn Fn(f64) -> bool,
) -> PatternField {
    let header = pick(rng, headers);
    let span = (3 * n as i64).max(24);
    loop {
        let lo = rng.gen_range(lo_base..=lo_base + 50);
        // Skewed sample: most values in the lower quarter, the rest high.
        let n_low = (3 * n) / 5;
        let mut values = distinct_ints(rng, lo, lo + span / 4, n_low);
        let high = distinct_ints(rng, lo + span / 2, lo + span, n - n_low);
        values.extend(high);
        let nums: Vec<f64> = values.iter().map(|v| *v as f64).collect();
        let mean = nums.iter().sum::<f64>() / nums.len() as f64;
        let min = nums.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mid = (max + min) / 2.0;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-6;
        if close(mean, mid)
            || nums.iter().any(|v| close(*v, mean) || close(*v, mid))
            || vocab_check(mean)
            || vocab_check(mid)
        {
            continue;
        }
        let (p1, p2) = if mean < mid { (mean, mid) } else { (mid, mean) };
        let mut cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        cells.shuffle(rng);
        return PatternField {
            header: header.to_string(),
            cells,
            record: Some((op, vec![ParamValue::Number(p1), ParamValue::Number(p2)])),
        };
    }
}

fn gen_icon_set(rng: &mut ChaCha8Rng, n: usize, vocab_check: &dyn Fn(f64) -> bool) -> PatternField {
    let header = pick(
        rng,
        &[
            "quality_stars",
            "rating_tier",
            "rank_medal",
            "level_badge",
            "priority_mark",
        ],
    );
    loop {
        let hi = 11 + 4 * n as i64;
        let pool: Vec<i64> = (11..=hi)
            .filter(|v| *v % 10 != 0 && !vocab_check(*v as f64))
            .collect();
        let mut pool = pool;
        pool.shuffle(rng);
        let values: Vec<i64> = pool.into_iter().take(n).collect();
        if values.len() < n {
            continue;
        }
        let mut sorted = values.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let p_rank = if n >= 12 { 10 } else { 5 };
        let v_hi = sorted[2] as f64; // descending rank 3
        let v_lo = sorted[p_rank - 1] as f64;
        let nums: Vec<f64> = values.iter().map(|v| *v as f64).collect();
        let mean = nums.iter().sum::<f64>() / nums.len() as f64;
        let min = nums.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mid = (max + min) / 2.0;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-6;
        if close(v_hi, mean) || close(v_hi, mid) || close(v_lo, mean) || close(v_lo, mid) {
            continue;
        }
        let cells = values.iter().map(|v| v.to_string()).collect();
        return PatternField {
            header: header.to_string(),
            cells,
            record: Some((
                OperationCf::IconSet,
                vec![ParamValue::Number(v_lo), ParamValue::Number(v_hi)],
            )),
        };
    }
}

fn gen_partition(rng: &mut ChaCha8Rng, n: usize) -> PatternField {
    let header = pick(
        rng,
        &[
            "roi_split",
            "margin_class",
            "delta_zone",
            "net_change",
            "yield_sector",
        ],
    );
    loop {
        let n_neg = (n / 3).max(1);
        let n_high = (n / 3).max(1);
        let n_mid = n - n_neg - n_high - 2; // two planted boundary cells
        let mut values = distinct_ints(rng, -40, -1, n_neg);
        values.extend(distinct_ints(rng, 1, 49, n_mid));
        values.extend(distinct_ints(rng, 51, 90, n_high));
        values.push(0);
        values.push(50);
        let nums: Vec<f64> = values.iter().map(|v| *v as f64).collect();
        let mean = nums.iter().sum::<f64>() / nums.len() as f64;
        let min = nums.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mid = (max + min) / 2.0;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-6;
        if close(mean, 0.0) || close(mean, 50.0) || close(mid, 0.0) || close(mid, 50.0) {
            continue;
        }
        let mut cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        cells.shuffle(rng);
        return PatternField {
            header: header.to_string(),
            cells,
            record: Some((
                OperationCf::PartitionSet,
                vec![ParamValue::Number(0.0), ParamValue::Number(50.0)],
            )),
        };
    }
}

fn gen_cf_field(
    rng: &mut ChaCha8Rng,
    op: OperationCf,
    n: usize,
    vocab: &crate::signatures::Vocabulary,
) -> PatternField {
    let is_emp = |v: f64| vocab.is_empirical(v);
    match op {
        OperationCf::IsError => gen_is_error(rng, n),
        OperationCf::IsBlank => gen_is_blank(rng, n),
        OperationCf::IsDuplicate => gen_is_duplicate(rng, n),
        OperationCf::LessGreaterThan => gen_mean_split(rng, n, &is_emp),
        OperationCf::TopBottomK => gen_top_k(rng, n),
        OperationCf::Between => gen_between(rng, n),
        OperationCf::EqualContains => gen_status(rng, n),
        OperationCf::EqualSet => gen_equal_set(rng, n),
        OperationCf::ColorScale => gen_gradient(
            rng,
            n,
            100,
            OperationCf::ColorScale,
            &[
                "heat_index",
                "intensity_level",
                "gradient_value",
                "shade_scale",
                "spectrum_pos",
            ],
            &is_emp,
        ),
        OperationCf::DataBar => gen_gradient(
            rng,
            n,
            300,
            OperationCf::DataBar,
            &[
                "progress_pct",
                "completion_bar",
                "load_factor",
                "fill_ratio",
                "capacity_used",
            ],
            &is_emp,
        ),
        OperationCf::IconSet => gen_icon_set(rng, n, &is_emp),
        OperationCf::PartitionSet => gen_partition(rng, n),
    }
}

struct ChartFields {
    headers: Vec<String>,
    columns: Vec<Vec<String>>,
    x_fields: Vec<usize>,
    y_fields: Vec<usize>,
}

fn iso_date(days: i64) -> String {
    let epoch = chrono::NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    (epoch + chrono::Duration::days(days))
        .format("%Y-%m-%d")
        .to_string()
}

fn gen_chart_fields(rng: &mut ChaCha8Rng, chart_type: ChartType, n: usize) -> ChartFields {
    let mut headers: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<String>> = Vec::new();
    let mut x_pos: Option<usize> = None;
    #[allow(unused_assignments)]
    let mut y_pos = 0usize;

    match chart_type {
        ChartType::Line => {
            let start = rng.gen_range(18000..=19000i64);
            let step = *[1i64, 7, 30].choose(rng).expect("non-empty");
            headers.push(
                pick(
                    rng,
                    &["date", "month", "period_end", "recorded_on", "report_date"],
                )
                .to_string(),
            );
            columns.push((0..n).map(|i| iso_date(start + step * i as i64)).collect());
            x_pos = Some(0);
            headers.push(
                pick(
                    rng,
                    &[
                        "sales_total",
                        "revenue_amount",
                        "visit_count",
                        "output_value",
                        "units_total",
                    ],
                )
                .to_string(),
            );
            columns.push(
                (0..n)
                    .map(|_| rng.gen_range(10..=500i64).to_string())
                    .collect(),
            );
            y_pos = 1;
        }
        ChartType::Bar => {
            let k = rng.gen_range(3..=5usize);
            let cats = distinct_words(rng, k);
            headers.push(
                pick(
                    rng,
                    &[
                        "category_name",
                        "region_label",
                        "product_name",
                        "team_label",
                        "group_label",
                    ],
                )
                .to_string(),
            );
            columns.push((0..n).map(|_| cats[rng.gen_range(0..k)].clone()).collect());
            x_pos = Some(0);
            headers.push(
                pick(
                    rng,
                    &[
                        "total_amount",
                        "count_value",
                        "sum_total",
                        "order_count",
                        "ship_amount",
                    ],
                )
                .to_string(),
            );
            columns.push(
                (0..n)
                    .map(|_| rng.gen_range(5..=400i64).to_string())
                    .collect(),
            );
            y_pos = 1;
            if rng.gen_bool(0.4) {
                headers.push(pick(rng, &["row_id", "seq_id", "entry_id"]).to_string());
                columns.push((1..=n).map(|i| i.to_string()).collect());
            }
        }
        ChartType::Scatter => {
            headers.push(
                pick(
                    rng,
                    &[
                        "x_position",
                        "input_level",
                        "dose_size",
                        "exposure_hours",
                        "distance_m",
                    ],
                )
                .to_string(),
            );
            let xs: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=300i64)).collect();
            columns.push(xs.iter().map(|v| v.to_string()).collect());
            x_pos = Some(0);
            headers.push(
                pick(
                    rng,
                    &[
                        "y_response",
                        "outcome_level",
                        "effect_size",
                        "growth_rate",
                        "response_level",
                    ],
                )
                .to_string(),
            );
            columns.push(
                xs.iter()
                    .map(|x| (2 * x + rng.gen_range(-20..=20i64)).to_string())
                    .collect(),
            );
            y_pos = 1;
        }
        ChartType::Pie => {
            let labels = distinct_words(rng, n);
            headers.push(
                pick(
                    rng,
                    &[
                        "slice_label",
                        "segment_name",
                        "portion_label",
                        "wedge_name",
                        "source_label",
                    ],
                )
                .to_string(),
            );
            columns.push(labels);
            headers.push(
                pick(
                    rng,
                    &["share_pct", "portion_value", "alloc_amount", "split_total"],
                )
                .to_string(),
            );
            columns.push(
                (0..n)
                    .map(|_| rng.gen_range(1..=100i64).to_string())
                    .collect(),
            );
            y_pos = 1;
        }
    }

    // Permute field order so axis roles are not positional.
    let k = headers.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let headers: Vec<String> = order.iter().map(|&i| headers[i].clone()).collect();
    let columns: Vec<Vec<String>> = order.iter().map(|&i| columns[i].clone()).collect();
    let find = |orig: usize| order.iter().position(|&i| i == orig).expect("present");
    let x_fields = match chart_type {
        ChartType::Pie => Vec::new(),
        _ => vec![find(x_pos.expect("set"))],
    };
    let y_fields = vec![find(y_pos)];
    ChartFields {
        headers,
        columns,
        x_fields,
        y_fields,
    }
}

/// Generate a seeded labeled corpus. Every record passes the executor
/// validity check and its golden labels follow from the signature rules.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    if spec.n_tables == 0 {
        return Err(Error::InvalidSpec(
            "n_tables must be at least 1".to_string(),
        ));
    }
    if spec.rows_min < 6 || spec.rows_max < spec.rows_min {
        return Err(Error::InvalidSpec(
            "rows_min must be >= 6 and rows_max >= rows_min".to_string(),
        ));
    }
    let mut cf_weights: Vec<(OperationCf, f64)> = Vec::new();
    let mut chart_weights: Vec<(ChartType, f64)> = Vec::new();
    for (key, w) in &spec.pattern_mix {
        if *w < 0.0 {
            return Err(Error::InvalidSpec(format!("negative weight for '{key}'")));
        }
        if let Some(op) = crate::semantics::OPERATIONS_CF
            .iter()
            .find(|o| o.name() == key)
        {
            cf_weights.push((*op, *w));
        } else if let Some(t) = crate::semantics::CHART_TYPES
            .iter()
            .find(|t| t.name() == key)
        {
            chart_weights.push((*t, *w));
        } else {
            return Err(Error::InvalidSpec(format!("unknown pattern key '{key}'")));
        }
    }
    cf_weights.sort_by_key(|(op, _)| op.index());
    chart_weights.sort_by_key(|(t, _)| t.index());
    let cf_total: f64 = cf_weights.iter().map(|(_, w)| w).sum();
    let chart_total: f64 = chart_weights.iter().map(|(_, w)| w).sum();
    if cf_total + chart_total <= 0.0 {
        return Err(Error::InvalidSpec(
            "pattern mix has no positive weight".to_string(),
        ));
    }

    let vocab = crate::signatures::Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tables = Vec::with_capacity(spec.n_tables);
    let mut records = Vec::new();

    let draw_weighted = |rng: &mut ChaCha8Rng, total: f64, weights: &[f64]| -> usize {
        let mut x = rng.gen_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.len() - 1
    };

    for t in 0..spec.n_tables {
        let id = format!("synth-{t:06}");
        let n = rng.gen_range(spec.rows_min..=spec.rows_max);
        let make_chart = rng.gen_range(0.0..cf_total + chart_total) >= cf_total;

        if make_chart && chart_total > 0.0 {
            let weights: Vec<f64> = chart_weights.iter().map(|(_, w)| *w).collect();
            let (chart_type, _) = chart_weights[draw_weighted(&mut rng, chart_total, &weights)];
            let f = gen_chart_fields(&mut rng, chart_type, n);
            tables.push(TableDoc::from_columns(&id, f.headers, f.columns));
            records.push(AnalysisRecord::Chart {
                table_id: id,
                chart_type,
                x_fields: f.x_fields,
                y_fields: f.y_fields,
            });
        } else {
            let n_fields = rng.gen_range(2..=4usize);
            let weights: Vec<f64> = cf_weights.iter().map(|(_, w)| *w).collect();
            let mut headers = Vec::with_capacity(n_fields);
            let mut columns = Vec::with_capacity(n_fields);
            let mut pending: Vec<(usize, OperationCf, Vec<ParamValue>)> = Vec::new();
            for fi in 0..n_fields {
                let (op, _) = cf_weights[draw_weighted(&mut rng, cf_total, &weights)];
                let pf = gen_cf_field(&mut rng, op, n, &vocab);
                headers.push(pf.header);
                columns.push(pf.cells);
                if let Some((op, params)) = pf.record {
                    pending.push((fi, op, params));
                }
            }
            let doc = TableDoc::from_columns(&id, headers, columns);
            let table = doc.to_table()?;
            for (fi, op, params) in pending {
                let coverage = record_coverage(op, &params, &table.fields[fi]);
                records.push(AnalysisRecord::Cf {
                    table_id: id.clone(),
                    field_index: fi,
                    operation: op,
                    parameters: params,
                    coverage: Some(coverage),
                });
            }
            tables.push(doc);
        }
    }
    Ok(SyntheticCorpus { tables, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::validate_record;
    use proptest::prelude::*;

    fn cf(table: &str, field: usize, op: OperationCf, params: Vec<ParamValue>) -> AnalysisRecord {
        AnalysisRecord::Cf {
            table_id: table.to_string(),
            field_index: field,
            operation: op,
            parameters: params,
            coverage: None,
        }
    }

    #[test]
    fn merge_collapses_identical() {
        let a = cf(
            "t",
            0,
            OperationCf::IsError,
            vec![ParamValue::Text("#REF!".into())],
        );
        let b = a.clone();
        assert_eq!(merge_records(&[a.clone(), b]).len(), 1);
        assert!(merge_records(&[]).is_empty());
        let c = cf(
            "t",
            0,
            OperationCf::EqualContains,
            vec![ParamValue::Text("x".into())],
        );
        let d = cf(
            "t",
            0,
            OperationCf::EqualContains,
            vec![ParamValue::Text("y".into())],
        );
        assert_eq!(merge_records(&[c, d]).len(), 2);
    }

    #[test]
    fn merge_takes_max_coverage() {
        let mut a = cf("t", 0, OperationCf::IsBlank, vec![ParamValue::Blank]);
        if let AnalysisRecord::Cf { coverage, .. } = &mut a {
            *coverage = Some(0.2);
        }
        let mut b = a.clone();
        if let AnalysisRecord::Cf { coverage, .. } = &mut b {
            *coverage = Some(0.6);
        }
        let merged = merge_records(&[a, b]);
        assert_eq!(merged.len(), 1);
        if let AnalysisRecord::Cf { coverage, .. } = &merged[0] {
            assert_eq!(*coverage, Some(0.6));
        }
    }

    #[test]
    fn coverage_filter() {
        let mut hi = cf("t", 0, OperationCf::IsBlank, vec![ParamValue::Blank]);
        if let AnalysisRecord::Cf { coverage, .. } = &mut hi {
            *coverage = Some(0.9);
        }
        let mut lo = cf(
            "t",
            0,
            OperationCf::IsError,
            vec![ParamValue::Text("#REF!".into())],
        );
        if let AnalysisRecord::Cf { coverage, .. } = &mut lo {
            *coverage = Some(0.3);
        }
        let tables = BTreeMap::new();
        let kept = filter_by_coverage(vec![hi.clone(), lo.clone()], &tables, 0.5);
        assert_eq!(kept.len(), 1);
        let kept = filter_by_coverage(vec![hi, lo], &tables, 0.0);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn dedup_keeps_at_most_five_per_schema() {
        let mk = |i: usize, val: &str| {
            TableDoc::from_columns(
                &format!("t{i}"),
                vec!["a".to_string(), "b".to_string()],
                vec![vec![val.to_string(); 3], vec!["1".to_string(); 3]],
            )
        };
        // Seven content-distinct tables sharing one schema.
        let tables: Vec<TableDoc> = (0..7).map(|i| mk(i, &format!("v{i}"))).collect();
        let kept = dedup_and_sample(tables, 5, 11);
        assert_eq!(kept.len(), 5);

        let tables: Vec<TableDoc> = (0..3).map(|i| mk(i, &format!("v{i}"))).collect();
        assert_eq!(dedup_and_sample(tables, 5, 11).len(), 3);

        // Bitwise-identical tables dedup before sampling.
        let tables = vec![mk(0, "same"), mk(1, "same")];
        assert_eq!(dedup_and_sample(tables, 5, 11).len(), 1);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SynthSpec {
            n_tables: 30,
            ..SynthSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(
            serde_json::to_string(&a.tables).unwrap(),
            serde_json::to_string(&b.tables).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
    }

    #[test]
    fn degenerate_mix_only_errors() {
        let mut mix = BTreeMap::new();
        mix.insert("IsError".to_string(), 1.0);
        let spec = SynthSpec {
            n_tables: 12,
            pattern_mix: mix,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        assert!(!corpus.records.is_empty());
        for r in &corpus.records {
            match r {
                AnalysisRecord::Cf { operation, .. } => {
                    assert_eq!(*operation, OperationCf::IsError)
                }
                AnalysisRecord::Chart { .. } => panic!("no chart tables expected"),
            }
        }
    }

    #[test]
    fn default_mix_shape() {
        let spec = SynthSpec {
            n_tables: 350,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        for r in &corpus.records {
            if let AnalysisRecord::Cf { operation, .. } = r {
                *counts.entry(operation.name()).or_insert(0) += 1;
            }
        }
        assert!(corpus.records.len() > 700);
        let eq = counts.get("EqualContains").copied().unwrap_or(0);
        assert!(
            counts.values().all(|c| *c <= eq),
            "EqualContains must be most frequent: {counts:?}"
        );
    }

    #[test]
    fn synthetic_records_are_executable() {
        let spec = SynthSpec {
            n_tables: 60,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let tables: BTreeMap<String, Table> = corpus
            .tables
            .iter()
            .map(|d| (d.id.clone(), d.to_table().unwrap()))
            .collect();
        let mut n_cf = 0;
        for r in &corpus.records {
            if let AnalysisRecord::Cf {
                table_id,
                field_index,
                operation,
                parameters,
                coverage,
            } = r
            {
                n_cf += 1;
                let field = &tables[table_id].fields[*field_index];
                assert!(
                    validate_record(*operation, parameters, field),
                    "invalid synthetic record {operation:?} {parameters:?} on {table_id}/{field_index}"
                );
                assert!(coverage.is_some());
            }
        }
        assert!(n_cf > 0);
    }

    #[test]
    fn jsonl_roundtrip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_tables: 8,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let tp = dir.path().join("tables.jsonl");
        let rp = dir.path().join("records.jsonl.gz");
        let header = JsonlHeader::new("tabsem.tables").with_seed(7);
        write_tables_jsonl(&tp, &header, &corpus.tables).unwrap();
        let header = JsonlHeader::new("tabsem.records").with_seed(7);
        write_records_jsonl(&rp, &header, &corpus.records).unwrap();
        assert_eq!(read_tables_jsonl(&tp).unwrap(), corpus.tables);
        assert_eq!(read_records_jsonl(&rp).unwrap(), corpus.records);
    }

    proptest! {
        #[test]
        fn merge_is_idempotent(ops in proptest::collection::vec(0usize..12, 0..40), fields in proptest::collection::vec(0usize..3, 0..40)) {
            let records: Vec<AnalysisRecord> = ops
                .iter()
                .zip(fields.iter().chain(std::iter::repeat(&0)))
                .map(|(o, f)| {
                    let op = OperationCf::from_index(*o).unwrap();
                    cf("t", *f, op, vec![ParamValue::Number(*o as f64)])
                })
                .collect();
            let once = merge_records(&records);
            let twice = merge_records(&once);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn dedup_bound(n_tables in 1usize..20, max in 1usize..6, seed in 0u64..50) {
            let tables: Vec<TableDoc> = (0..n_tables)
                .map(|i| {
                    TableDoc::from_columns(
                        &format!("t{i}"),
                        vec!["h".to_string()],
                        vec![vec![format!("v{}", i % 4); 2]],
                    )
                })
                .collect();
            let unique = 4.min(n_tables);
            let kept = dedup_and_sample(tables, max, seed);
            prop_assert!(kept.len() <= unique.min(max));
        }
    }
}
