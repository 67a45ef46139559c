//! Statistical profiling of fields: per-cell signatures (frequency, rank,
//! range positions plus inferred boolean flags), per-field signatures
//! (type, header similarity, cardinality, affix, metadata statistics), the
//! common-signature candidate rules, and the flag-driven cell sampling
//! strategy.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::table::{Cell, CellKind, Field, FieldType, Table, ValueKey};
use crate::{Error, Result};

/// Length of the numeric vector produced by [`CellSignature::to_vector`].
pub const CELL_SIG_DIM: usize = 27;
/// Length of the numeric vector produced by [`FieldSignature::to_vector`].
pub const FIELD_SIG_DIM: usize = 25;

/// Default cap for [`sample_cells`].
pub const DEFAULT_SAMPLE_CAP: usize = 64;

/// Per-cell statistical signature. Rank and range entries are only
/// populated for `Number` cells of `Numeric` fields; string fields get the
/// frequency signatures and the applicable flags, everything else is 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CellSignature {
    pub freq_count: usize,
    pub freq_ratio: f64,
    /// Dense rank of the cell's frequency, 1 = most frequent. 0 for blanks.
    pub freq_rank: usize,
    /// 1-based position after ascending sort, ties by row order. 0 when not ranked.
    pub asc_rank: usize,
    /// 1-based position after descending sort, ties by row order. 0 when not ranked.
    pub desc_rank: usize,
    /// (e - MIN) / (MAX - MIN); 0 when MAX = MIN or not ranked.
    pub range_minmax: f64,
    /// (e - 10^N) / (2 * 10^N) with N = max over the magnitude exponents of
    /// MIN and MAX (bounds with |x| <= 1 contribute 0).
    pub range_log: f64,
    /// (asc_rank - 1) / (n - 1); 0 when n = 1 or not ranked.
    pub percentile_minmax: f64,
    pub is_common_frequency: bool,
    pub is_common_rank: bool,
    pub is_common_range: bool,
    pub is_meaningless: bool,
    pub is_empirical: bool,
    pub is_blank: bool,
    pub is_error: bool,
}

impl CellSignature {
    pub fn any_flag(&self) -> bool {
        self.is_common_frequency
            || self.is_common_rank
            || self.is_common_range
            || self.is_meaningless
            || self.is_empirical
            || self.is_blank
            || self.is_error
    }

    /// Fixed-order numeric vector for model input. Counts and ranks are
    /// scaled by the field length so every entry stays O(1).
    pub fn to_vector(&self, n_cells: usize) -> Vec<f64> {
        let n = n_cells.max(1) as f64;
        let mut v = vec![
            self.freq_count as f64 / n,
            self.freq_ratio,
            self.freq_rank as f64 / n,
            self.asc_rank as f64 / n,
            self.desc_rank as f64 / n,
            // Reciprocal ranks resolve small rank positions sharply.
            if self.asc_rank > 0 {
                1.0 / self.asc_rank as f64
            } else {
                0.0
            },
            if self.desc_rank > 0 {
                1.0 / self.desc_rank as f64
            } else {
                0.0
            },
            self.range_minmax,
            self.range_log,
            self.percentile_minmax,
            f64::from(self.is_common_frequency),
            f64::from(self.is_common_rank),
            f64::from(self.is_common_range),
            f64::from(self.is_meaningless),
            f64::from(self.is_empirical),
            f64::from(self.is_blank),
            f64::from(self.is_error),
        ];
        // Sided indicators at the named common positions.
        for p in [1usize, 3, 5, 10, 20] {
            v.push(f64::from(self.desc_rank == p));
        }
        for p in [1usize, 3, 5, 10, 20] {
            v.push(f64::from(self.asc_rank == p));
        }
        debug_assert_eq!(v.len(), CELL_SIG_DIM);
        v
    }
}

/// Per-field statistical signature.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FieldSignature {
    pub ftype: Option<FieldType>,
    /// Highest trigram-Jaccard similarity of the header against the other
    /// headers of the table.
    pub header_similarity: f64,
    pub has_keyword_x: bool,
    pub has_keyword_y: bool,
    /// Unique-value ratio over non-blank cells exceeds 0.99.
    pub is_common_cardinality: bool,
    /// Proportion of number cells inside [0,1] or inside [1,100] exceeds 0.97.
    pub is_common_range: bool,
    /// At least 80% of the text cells share a first or last character.
    pub is_common_affix: bool,
    /// header_similarity exceeds 0.61.
    pub is_common_header: bool,
    /// The field's type is the most common field type of its table.
    pub is_common_type: bool,
    /// DateTime field, or the header mentions a date word.
    pub is_date_format: bool,
    /// Fixed-order metadata statistics, see [`FieldSignature::metadata_layout`].
    pub metadata: Vec<f64>,
}

impl FieldSignature {
    /// Order of the metadata entries.
    pub fn metadata_layout() -> [&'static str; 13] {
        [
            "cardinality_ratio",
            "key_entropy",
            "char_entropy",
            "mean",
            "variance",
            "min",
            "max",
            "range",
            "benford_deviation", // reserved, always 0
            "change_rate",
            "proportion_negative",
            "proportion_blank",
            "header_word_count",
        ]
    }

    /// Fixed-order numeric vector for model input. Unbounded statistics are
    /// squashed with sign(x) * ln(1 + |x|).
    pub fn to_vector(&self) -> Vec<f64> {
        let onehot = |t: FieldType| f64::from(self.ftype == Some(t));
        let squash = |x: f64| x.signum() * x.abs().ln_1p();
        let mut v = vec![
            onehot(FieldType::Numeric),
            onehot(FieldType::String),
            onehot(FieldType::DateTime),
            self.header_similarity,
            f64::from(self.has_keyword_x),
            f64::from(self.has_keyword_y),
            f64::from(self.is_common_cardinality),
            f64::from(self.is_common_range),
            f64::from(self.is_common_affix),
            f64::from(self.is_common_header),
            f64::from(self.is_common_type),
            f64::from(self.is_date_format),
        ];
        for (i, m) in self.metadata.iter().enumerate() {
            // mean, variance, min, max, range and header_word_count are unbounded
            let unbounded = matches!(i, 3..=7 | 12);
            v.push(if unbounded { squash(*m) } else { *m });
        }
        debug_assert_eq!(v.len(), FIELD_SIG_DIM);
        v
    }
}

/// Shared vocabularies of meaningless strings and empirical numbers, plus
/// the x/y-axis keyword lists. Loadable from a JSON config file; defaults
/// are shipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Vocabulary {
    pub meaningless: BTreeSet<String>,
    pub empirical: Vec<f64>,
    pub keywords_x: Vec<String>,
    pub keywords_y: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let meaningless = [
            "none",
            "n/a",
            "n.a.",
            "na",
            "null",
            "nil",
            "unknown",
            "unk",
            "-",
            "--",
            "---",
            "?",
            "??",
            "tbd",
            "tba",
            "blank",
            "missing",
            "pending",
            "empty",
            "undefined",
            "unspecified",
            "not applicable",
            "not available",
            "no data",
            "nodata",
            "void",
            "x",
            "xx",
            "xxx",
            ".",
            "..",
            "dummy",
            "placeholder",
            "temp",
            "tmp",
            "misc",
            "other",
            "others",
            "default",
            "deleted",
            "removed",
            "disabled",
            "inactive",
            "closed",
        ]
        .into_iter()
        .map(str::to_string)
        .collect();
        let empirical = vec![
            0.0, 1.0, 0.5, 10.0, 50.0, 100.0, 1000.0, -1.0, 5.0, 25.0, 75.0, 0.25, 0.75, 12.0,
            24.0, 7.0, 30.0, 60.0, 365.0, 2.0,
        ];
        let keywords_x = [
            "category",
            "categories",
            "name",
            "label",
            "id",
            "date",
            "time",
            "year",
            "month",
        ]
        .into_iter()
        .map(str::to_string)
        .collect();
        let keywords_y = [
            "value", "values", "amount", "count", "total", "price", "score", "rate",
        ]
        .into_iter()
        .map(str::to_string)
        .collect();
        Vocabulary {
            meaningless,
            empirical,
            keywords_x,
            keywords_y,
        }
    }
}

impl Vocabulary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut v: Vocabulary = serde_json::from_str(&text)?;
        v.meaningless = v.meaningless.iter().map(|s| s.to_lowercase()).collect();
        // Deduplicate while keeping the file's order.
        let mut seen: Vec<u64> = Vec::new();
        v.empirical.retain(|e| {
            let bits = e.to_bits();
            if seen.contains(&bits) {
                false
            } else {
                seen.push(bits);
                true
            }
        });
        Ok(v)
    }

    pub fn is_meaningless(&self, raw: &str) -> bool {
        self.meaningless.contains(&raw.trim().to_lowercase())
    }

    pub fn is_empirical(&self, v: f64) -> bool {
        self.empirical.iter().any(|e| (e - v).abs() <= 1e-9)
    }
}

/// 1-based positions that count as "common ranks" for a field of `n` ranked
/// values: 1, 3, 5, 10, 20 (when <= n) plus every decile position
/// round(0.1k * (n-1)) + 1 for k = 1..9, rounding half away from zero.
pub fn common_rank_positions(n: usize) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    if n == 0 {
        return set;
    }
    for p in [1usize, 3, 5, 10, 20] {
        if p <= n {
            set.insert(p);
        }
    }
    for k in 1..=9usize {
        let pos = (0.1 * k as f64 * (n - 1) as f64).round() as usize + 1;
        if pos >= 1 && pos <= n {
            set.insert(pos);
        }
    }
    set
}

/// Smallest non-negative integer n with 10^n >= |x|; bounds with |x| <= 1
/// contribute 0.
fn magnitude_exponent(x: f64) -> i32 {
    let a = x.abs();
    if a <= 1.0 {
        return 0;
    }
    let mut n = 1;
    let mut p = 10.0f64;
    while p < a {
        p *= 10.0;
        n += 1;
    }
    n
}

/// Largest power of ten <= range (range must be > 0).
fn power_of_ten_step(range: f64) -> f64 {
    let mut p = 1.0f64;
    if range >= 1.0 {
        while p * 10.0 <= range {
            p *= 10.0;
        }
    } else {
        while p > range {
            p /= 10.0;
        }
    }
    p
}

/// Common range-aware values of a numeric field: the mean, the midpoint
/// (max + min) / 2, and every cell value within 0.005 * range of an integer
/// multiple of the largest power of ten below the range. Mean and midpoint
/// are included even when they are not cell values.
pub fn common_range_values(field: &Field) -> Result<Vec<f64>> {
    if field.ftype != FieldType::Numeric {
        return Err(Error::NotNumeric(field.header.clone()));
    }
    let nums = field.numbers();
    if nums.is_empty() {
        return Err(Error::NotNumeric(field.header.clone()));
    }
    let mean = nums.iter().sum::<f64>() / nums.len() as f64;
    let min = nums.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![mean, (max + min) / 2.0];
    if max > min {
        let range = max - min;
        let step = power_of_ten_step(range);
        let tol = 0.005 * range;
        for &x in &nums {
            let m = (x / step).round();
            if (x - m * step).abs() <= tol {
                out.push(x);
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out.dedup();
    Ok(out)
}

/// Ceil of 0.3 * u without float artifacts.
fn top30(u: usize) -> usize {
    (3 * u).div_ceil(10)
}

/// Compute one signature per cell, in cell order.
pub fn compute_cell_signatures(field: &Field, vocab: &Vocabulary) -> Vec<CellSignature> {
    let n = field.cells.len();
    let mut sigs = vec![CellSignature::default(); n];

    // Frequency over non-blank cells.
    let mut counts: HashMap<ValueKey, usize> = HashMap::new();
    let mut n_nonblank = 0usize;
    for c in &field.cells {
        if !c.is_blank() {
            *counts.entry(c.value_key()).or_insert(0) += 1;
            n_nonblank += 1;
        }
    }
    let distinct_freqs: Vec<usize> = {
        let mut f: Vec<usize> = counts.values().cloned().collect();
        f.sort_unstable_by(|a, b| b.cmp(a));
        f.dedup();
        f
    };
    let u = distinct_freqs.len();
    let common_top = top30(u);
    // distinct_freqs is descending; dense rank = position + 1.
    let rank_of = |freq: usize| -> usize {
        distinct_freqs
            .iter()
            .position(|&f| f == freq)
            .map(|p| p + 1)
            .unwrap_or(0)
    };

    for (i, c) in field.cells.iter().enumerate() {
        let s = &mut sigs[i];
        s.is_blank = c.is_blank();
        s.is_error = c.is_error();
        if c.is_blank() {
            continue;
        }
        let freq = counts[&c.value_key()];
        s.freq_count = freq;
        s.freq_ratio = if n_nonblank > 0 {
            freq as f64 / n_nonblank as f64
        } else {
            0.0
        };
        let rank_desc = rank_of(freq);
        s.freq_rank = rank_desc;
        let rank_asc = u + 1 - rank_desc;
        // With a single distinct frequency (e.g. an all-distinct field)
        // nothing is distinctive, so the flag stays off.
        s.is_common_frequency = u >= 2 && (rank_desc <= common_top || rank_asc <= common_top);
        s.is_meaningless = vocab.is_meaningless(&c.raw);
    }

    // Rank/range signatures only for number cells of numeric fields.
    if field.ftype == FieldType::Numeric {
        let ranked: Vec<(usize, f64)> = field
            .cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.number().map(|v| (i, v)))
            .collect();
        let n_ranked = ranked.len();
        if n_ranked > 0 {
            let mut asc = ranked.clone();
            asc.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite").then(a.0.cmp(&b.0)));
            let mut desc = ranked.clone();
            desc.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
            for (pos, (i, _)) in asc.iter().enumerate() {
                sigs[*i].asc_rank = pos + 1;
            }
            for (pos, (i, _)) in desc.iter().enumerate() {
                sigs[*i].desc_rank = pos + 1;
            }

            let min = asc[0].1;
            let max = asc[n_ranked - 1].1;
            let exponent = magnitude_exponent(max).max(magnitude_exponent(min));
            let log_base = 10f64.powi(exponent);
            let positions = common_rank_positions(n_ranked);
            let range_values = common_range_values(field).unwrap_or_default();

            for (i, v) in &ranked {
                let s = &mut sigs[*i];
                s.range_minmax = if max > min {
                    (v - min) / (max - min)
                } else {
                    0.0
                };
                s.range_log = (v - log_base) / (2.0 * log_base);
                s.percentile_minmax = if n_ranked > 1 {
                    (s.asc_rank - 1) as f64 / (n_ranked - 1) as f64
                } else {
                    0.0
                };
                s.is_common_rank =
                    positions.contains(&s.asc_rank) || positions.contains(&s.desc_rank);
                s.is_common_range = range_values
                    .iter()
                    .any(|m| (v - m).abs() <= 1e-9 * m.abs().max(1.0));
                s.is_empirical = vocab.is_empirical(*v);
            }
        }
    }
    sigs
}

/// Trigrams of the lowercased string. Strings shorter than three characters
/// contribute themselves as a single gram.
fn trigram_set(s: &str) -> BTreeSet<String> {
    let lower = s.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    if chars.is_empty() {
        return BTreeSet::new();
    }
    if chars.len() < 3 {
        return BTreeSet::from([lower]);
    }
    chars
        .windows(3)
        .map(|w| w.iter().collect::<String>())
        .collect()
}

fn trigram_jaccard(a: &str, b: &str) -> f64 {
    let sa = trigram_set(a);
    let sb = trigram_set(b);
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Highest similarity of `target` against `others`; 0 when `others` is empty.
pub fn header_similarity(target: &str, others: &[String]) -> f64 {
    others
        .iter()
        .map(|o| trigram_jaccard(target, o))
        .fold(0.0, f64::max)
}

const DATE_WORDS: [&str; 5] = ["date", "time", "year", "month", "day"];

/// Compute the field-level signature for one field of a table.
pub fn compute_field_signatures(
    table: &Table,
    field_index: usize,
    vocab: &Vocabulary,
    keywords_x: &[String],
    keywords_y: &[String],
) -> Result<FieldSignature> {
    let _ = vocab;
    let field = table.field(field_index)?;
    let header_lower = field.header.to_lowercase();
    let others: Vec<String> = table
        .fields
        .iter()
        .filter(|f| f.index != field_index)
        .map(|f| f.header.clone())
        .collect();
    let similarity = header_similarity(&field.header, &others);

    let contains_any =
        |kws: &[String]| kws.iter().any(|k| header_lower.contains(&k.to_lowercase()));

    let n_cells = field.cells.len();
    let nonblank: Vec<&Cell> = field.cells.iter().filter(|c| !c.is_blank()).collect();
    let n_nonblank = nonblank.len();

    let distinct: BTreeSet<ValueKey> = nonblank.iter().map(|c| c.value_key()).collect();
    let cardinality_ratio = if n_nonblank > 0 {
        distinct.len() as f64 / n_nonblank as f64
    } else {
        0.0
    };

    let nums = field.numbers();
    let is_common_range = if nums.is_empty() {
        false
    } else {
        let in01 = nums.iter().filter(|v| (0.0..=1.0).contains(*v)).count();
        let in1_100 = nums.iter().filter(|v| (1.0..=100.0).contains(*v)).count();
        let n = nums.len() as f64;
        in01 as f64 / n > 0.97 || in1_100 as f64 / n > 0.97
    };

    let texts: Vec<&str> = field
        .cells
        .iter()
        .filter(|c| matches!(c.kind, CellKind::Text))
        .map(|c| c.raw.trim())
        .collect();
    let is_common_affix = shares_affix(&texts);

    let modal = modal_field_type(table);
    let is_common_type = modal.contains(&field.ftype);

    let is_date_format =
        field.ftype == FieldType::DateTime || DATE_WORDS.iter().any(|w| header_lower.contains(w));

    let metadata = metadata_vector(field, n_cells, n_nonblank, cardinality_ratio, &nonblank);

    Ok(FieldSignature {
        ftype: Some(field.ftype),
        header_similarity: similarity,
        has_keyword_x: contains_any(keywords_x),
        has_keyword_y: contains_any(keywords_y),
        is_common_cardinality: cardinality_ratio > 0.99,
        is_common_range,
        is_common_affix,
        is_common_header: similarity > 0.61,
        is_common_type,
        is_date_format,
        metadata,
    })
}

fn shares_affix(texts: &[&str]) -> bool {
    if texts.is_empty() {
        return false;
    }
    let n = texts.len();
    let mut firsts: HashMap<char, usize> = HashMap::new();
    let mut lasts: HashMap<char, usize> = HashMap::new();
    for t in texts {
        if let Some(c) = t.chars().next() {
            *firsts.entry(c).or_insert(0) += 1;
        }
        if let Some(c) = t.chars().last() {
            *lasts.entry(c).or_insert(0) += 1;
        }
    }
    let best = firsts
        .values()
        .chain(lasts.values())
        .cloned()
        .max()
        .unwrap_or(0);
    best * 5 >= n * 4
}

fn modal_field_type(table: &Table) -> Vec<FieldType> {
    let mut counts = [0usize; 3];
    for f in &table.fields {
        match f.ftype {
            FieldType::Numeric => counts[0] += 1,
            FieldType::String => counts[1] += 1,
            FieldType::DateTime => counts[2] += 1,
        }
    }
    let max = counts.iter().max().copied().unwrap_or(0);
    let mut out = Vec::new();
    if counts[0] == max {
        out.push(FieldType::Numeric);
    }
    if counts[1] == max {
        out.push(FieldType::String);
    }
    if counts[2] == max {
        out.push(FieldType::DateTime);
    }
    out
}

fn entropy(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.ln();
        }
    }
    h
}

fn metadata_vector(
    field: &Field,
    n_cells: usize,
    n_nonblank: usize,
    cardinality_ratio: f64,
    nonblank: &[&Cell],
) -> Vec<f64> {
    // BTreeMaps keep the float summation order of the entropies fixed.
    let mut key_counts: BTreeMap<ValueKey, usize> = BTreeMap::new();
    let mut char_counts: BTreeMap<char, usize> = BTreeMap::new();
    let mut n_chars = 0usize;
    for c in nonblank {
        *key_counts.entry(c.value_key()).or_insert(0) += 1;
        for ch in c.raw.trim().chars() {
            *char_counts.entry(ch).or_insert(0) += 1;
            n_chars += 1;
        }
    }
    let key_entropy = entropy(key_counts.values().cloned(), n_nonblank);
    let char_entropy = entropy(char_counts.values().cloned(), n_chars);

    let nums = field.numbers();
    let (mean, variance, min, max) = if nums.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let n = nums.len() as f64;
        let mean = nums.iter().sum::<f64>() / n;
        let variance = nums.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let min = nums.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (mean, variance, min, max)
    };
    let range = if nums.is_empty() { 0.0 } else { max - min };

    let mut changes = 0usize;
    let mut pairs = 0usize;
    for w in field.cells.windows(2) {
        if !w[0].is_blank() && !w[1].is_blank() {
            pairs += 1;
            if w[0].value_key() != w[1].value_key() {
                changes += 1;
            }
        }
    }
    let change_rate = if pairs > 0 {
        changes as f64 / pairs as f64
    } else {
        0.0
    };

    let prop_negative = if nums.is_empty() {
        0.0
    } else {
        nums.iter().filter(|v| **v < 0.0).count() as f64 / nums.len() as f64
    };
    let prop_blank = if n_cells > 0 {
        (n_cells - n_nonblank) as f64 / n_cells as f64
    } else {
        0.0
    };

    vec![
        cardinality_ratio,
        key_entropy,
        char_entropy,
        mean,
        variance,
        min,
        max,
        range,
        0.0, // benford deviation, reserved
        change_rate,
        prop_negative,
        prop_blank,
        field.header.split_whitespace().count() as f64,
    ]
}

/// Flag priority used when truncating the sampled cell set. Lower is kept
/// first.
fn flag_priority(s: &CellSignature) -> u8 {
    if s.is_error {
        0
    } else if s.is_blank {
        1
    } else if s.is_meaningless {
        2
    } else if s.is_empirical {
        3
    } else if s.is_common_rank {
        4
    } else if s.is_common_range {
        5
    } else {
        6 // is_common_frequency
    }
}

/// Indices of cells carrying at least one inferred flag, in original row
/// order. When more than `cap` cells qualify, membership is decided by flag
/// priority (error > blank > meaningless > empirical > common rank > common
/// range > common frequency), ties by row order.
pub fn sample_cells(field: &Field, sigs: &[CellSignature], cap: usize) -> Vec<usize> {
    debug_assert_eq!(field.cells.len(), sigs.len());
    let mut flagged: Vec<usize> = (0..sigs.len()).filter(|&i| sigs[i].any_flag()).collect();
    if flagged.len() > cap {
        flagged.sort_by_key(|&i| (flag_priority(&sigs[i]), i));
        flagged.truncate(cap);
        flagged.sort_unstable();
    }
    flagged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Field;
    use proptest::prelude::*;

    fn field_of(values: &[&str]) -> Field {
        let raw: Vec<String> = values.iter().map(|s| s.to_string()).collect();
        Field::from_raw(0, "f", &raw)
    }

    fn vocab() -> Vocabulary {
        Vocabulary::default()
    }

    #[test]
    fn frequency_signatures() {
        let f = field_of(&["a", "a", "b"]);
        let sigs = compute_cell_signatures(&f, &vocab());
        assert_eq!(sigs[0].freq_count, 2);
        assert!((sigs[0].freq_ratio - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(sigs[0].freq_rank, 1);
        assert_eq!(sigs[2].freq_count, 1);
        assert_eq!(sigs[2].freq_rank, 2);
    }

    #[test]
    fn range_minmax_midpoint() {
        let f = field_of(&["60", "80", "100"]);
        let sigs = compute_cell_signatures(&f, &vocab());
        assert!((sigs[1].range_minmax - 0.5).abs() < 1e-12);
        assert_eq!(sigs[0].range_minmax, 0.0);
        assert_eq!(sigs[2].range_minmax, 1.0);
    }

    #[test]
    fn range_log_formula() {
        // MIN = -5, MAX = 50 -> N = max(ceil lg 50, ceil lg 5) = 2,
        // range_log(0) = (0 - 100) / 200 = -0.5.
        let f = field_of(&["-5", "50", "0"]);
        let sigs = compute_cell_signatures(&f, &vocab());
        assert!((sigs[2].range_log - (-0.5)).abs() < 1e-12);
        assert!((sigs[1].range_log - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn rank_positions_small() {
        assert_eq!(common_rank_positions(3), BTreeSet::from([1, 2, 3]));
        assert_eq!(common_rank_positions(1), BTreeSet::from([1]));
        let p20 = common_rank_positions(20);
        for base in [1usize, 3, 5, 10, 20] {
            assert!(p20.contains(&base));
        }
        for k in 1..=9usize {
            let pos = (0.1 * k as f64 * 19.0).round() as usize + 1;
            assert!(p20.contains(&pos));
        }
    }

    #[test]
    fn range_values_mean_and_midpoint() {
        // 60 + 70 + 80 + 94 = 304, mean = 76.
        let f = field_of(&["60", "70", "80", "94"]);
        let vals = common_range_values(&f).unwrap();
        assert!(vals.iter().any(|v| (*v - 76.0).abs() < 1e-12));

        let f = field_of(&["60", "100"]);
        let vals = common_range_values(&f).unwrap();
        assert!(vals.iter().any(|v| (*v - 80.0).abs() < 1e-12));

        let f = field_of(&["5", "5"]);
        assert_eq!(common_range_values(&f).unwrap(), vec![5.0]);

        let f = field_of(&["a", "b"]);
        assert!(matches!(common_range_values(&f), Err(Error::NotNumeric(_))));
    }

    #[test]
    fn string_fields_only_applicable_signatures() {
        let f = field_of(&["x1", "x1", "y2", "", "#REF!"]);
        assert_eq!(f.ftype, FieldType::String);
        let sigs = compute_cell_signatures(&f, &vocab());
        assert_eq!(sigs[0].asc_rank, 0);
        assert_eq!(sigs[0].range_minmax, 0.0);
        assert!(!sigs[0].is_common_rank);
        assert!(!sigs[0].is_empirical);
        assert!(sigs[0].freq_count == 2);
        assert!(sigs[3].is_blank);
        assert!(sigs[4].is_error);
        assert_eq!(sigs[4].freq_count, 1);
    }

    #[test]
    fn field_signature_flags() {
        let rows: Vec<Vec<String>> = std::iter::once(vec!["id".to_string(), "pct".to_string()])
            .chain((0..100).map(|i| vec![format!("u{i}"), format!("{}", i % 100)]))
            .collect();
        let t = crate::table::parse_table(&rows, true, "t").unwrap();
        let v = vocab();
        let s0 = compute_field_signatures(&t, 0, &v, &v.keywords_x, &v.keywords_y).unwrap();
        assert!(s0.is_common_cardinality);
        assert!(s0.has_keyword_x); // "id"
        assert!(s0.is_common_affix); // shared prefix "u"

        let s1 = compute_field_signatures(&t, 1, &v, &v.keywords_x, &v.keywords_y).unwrap();
        // 99 of 100 values inside [1,100]; only the 0 is outside.
        assert!(s1.is_common_range);
    }

    #[test]
    fn header_similarity_values() {
        assert_eq!(header_similarity("abc", &["abc".to_string()]), 1.0);
        assert_eq!(header_similarity("abc", &[]), 0.0);
        // "round 1" vs "round 2": 4 shared trigrams of 6 total.
        let sim = header_similarity("Round 1", &["Round 2".to_string(), "Name".to_string()]);
        assert!((sim - 2.0 / 3.0).abs() < 1e-12);
        // "sales 2020" vs "sales 2021": 7 shared of 9 total.
        let sim = header_similarity("Sales 2020", &["Sales 2021".to_string()]);
        assert!((sim - 7.0 / 9.0).abs() < 1e-12);
        assert!(sim > 0.61);
    }

    #[test]
    fn sampling_rules() {
        let f = field_of(&["1", "2", "#REF!", "3", "4"]);
        let sigs = compute_cell_signatures(&f, &vocab());
        let idx = sample_cells(&f, &sigs, DEFAULT_SAMPLE_CAP);
        assert!(idx.contains(&2));

        // All flags off: craft signatures directly since real numeric
        // fields always flag some ranks.
        let none = vec![CellSignature::default(); 3];
        let f3 = field_of(&["10", "11", "12"]);
        assert!(sample_cells(&f3, &none, 8).is_empty());
    }

    #[test]
    fn sampling_priority_truncation() {
        // 6 flagged cells, cap 4: both errors and both blanks survive,
        // the meaningless pair is cut, output stays in row order.
        let f = field_of(&["unknown", "", "#REF!", "none", "", "#DIV/0!"]);
        let sigs = compute_cell_signatures(&f, &vocab());
        let idx = sample_cells(&f, &sigs, 4);
        assert_eq!(idx, vec![1, 2, 4, 5]);
    }

    #[test]
    fn vectors_have_documented_dims() {
        let f = field_of(&["1", "2", ""]);
        let sigs = compute_cell_signatures(&f, &vocab());
        assert_eq!(sigs[0].to_vector(3).len(), CELL_SIG_DIM);
        let rows = vec![
            vec!["a".to_string(), "b".to_string()],
            vec!["1".to_string(), "x".to_string()],
        ];
        let t = crate::table::parse_table(&rows, true, "t").unwrap();
        let v = vocab();
        let fs = compute_field_signatures(&t, 0, &v, &v.keywords_x, &v.keywords_y).unwrap();
        assert_eq!(fs.to_vector().len(), FIELD_SIG_DIM);
        assert!(fs.to_vector().iter().all(|x| x.is_finite()));
    }

    proptest! {
        #[test]
        fn asc_rank_orders_values(values in proptest::collection::vec(-1000i64..1000, 1..30)) {
            let raw: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let f = Field::from_raw(0, "n", &raw);
            prop_assume!(f.ftype == FieldType::Numeric);
            let sigs = compute_cell_signatures(&f, &vocab());
            let mut by_asc: Vec<(usize, f64)> = f
                .cells
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.number().map(|v| (sigs[i].asc_rank, v)))
                .collect();
            by_asc.sort_by_key(|(r, _)| *r);
            for w in by_asc.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            let n = by_asc.len();
            // asc + desc = n + 1 when all values are distinct.
            let distinct = {
                let mut v = values.clone();
                v.sort_unstable();
                v.dedup();
                v.len() == values.len()
            };
            if distinct {
                for (i, _) in f.cells.iter().enumerate() {
                    prop_assert_eq!(sigs[i].asc_rank + sigs[i].desc_rank, n + 1);
                }
            }
        }

        #[test]
        fn common_rank_flag_matches_positions(values in proptest::collection::vec(-50i64..50, 1..30)) {
            let raw: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let f = Field::from_raw(0, "n", &raw);
            prop_assume!(f.ftype == FieldType::Numeric);
            let sigs = compute_cell_signatures(&f, &vocab());
            let n = f.numbers().len();
            let pos = common_rank_positions(n);
            for s in &sigs {
                let expect = pos.contains(&s.asc_rank) || pos.contains(&s.desc_rank);
                prop_assert_eq!(s.is_common_rank, expect);
            }
        }

        #[test]
        fn sample_cells_subset_and_cap(values in proptest::collection::vec("[a-c#! ]{0,4}", 1..40), cap in 1usize..10) {
            let raw: Vec<String> = values.to_vec();
            let f = Field::from_raw(0, "s", &raw);
            let sigs = compute_cell_signatures(&f, &vocab());
            let out = sample_cells(&f, &sigs, cap);
            prop_assert!(out.len() <= cap);
            for &i in &out {
                prop_assert!(sigs[i].any_flag());
            }
            prop_assert_eq!(out.clone(), sample_cells(&f, &sigs, cap));
        }

        #[test]
        fn positive_scaling_keeps_order_signatures(values in proptest::collection::vec(-100i64..100, 2..25), scale in prop::sample::select(vec![2.0f64, 10.0, 0.5])) {
            let raw: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let f = Field::from_raw(0, "n", &raw);
            prop_assume!(f.ftype == FieldType::Numeric);
            let scaled_raw: Vec<String> = values.iter().map(|v| format!("{}", *v as f64 * scale)).collect();
            let g = Field::from_raw(0, "n", &scaled_raw);
            prop_assume!(g.ftype == FieldType::Numeric);
            let a = compute_cell_signatures(&f, &vocab());
            let b = compute_cell_signatures(&g, &vocab());
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert_eq!(x.asc_rank, y.asc_rank);
                prop_assert_eq!(x.desc_rank, y.desc_rank);
                prop_assert!((x.percentile_minmax - y.percentile_minmax).abs() < 1e-12);
                prop_assert_eq!(x.freq_count, y.freq_count);
                prop_assert!((x.freq_ratio - y.freq_ratio).abs() < 1e-12);
                prop_assert_eq!(x.freq_rank, y.freq_rank);
            }
        }
    }
}
