//! Label spaces for user intent and data focus, the rule-based golden
//! labeling of records, the (intent, focus) -> operation map used for
//! candidate pruning, and the executor that applies conditional-formatting
//! conditions to fields.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnalysisRecord, ParamValue};
use crate::signatures::{common_range_values, CellSignature, FieldSignature, Vocabulary};
use crate::table::{Cell, CellKind, Field, FieldType, Table};
use crate::{Error, Result};

/// User intent of a conditional-formatting analysis: highlight a subset
/// (`Detect`) or contrast multiple subsets (`Compare`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserIntentCf {
    #[serde(rename = "Det")]
    Detect,
    #[serde(rename = "Com")]
    Compare,
}

pub const USER_INTENTS_CF: [UserIntentCf; 2] = [UserIntentCf::Detect, UserIntentCf::Compare];

impl UserIntentCf {
    pub fn index(self) -> usize {
        match self {
            UserIntentCf::Detect => 0,
            UserIntentCf::Compare => 1,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            UserIntentCf::Detect => "Det",
            UserIntentCf::Compare => "Com",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        USER_INTENTS_CF.into_iter().find(|i| i.code() == code)
    }
}

/// Data focus of a conditional-formatting analysis: which data feature the
/// referenced cells are salient for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataFocusCf {
    #[serde(rename = "Err")]
    Error,
    #[serde(rename = "Bla")]
    Blank,
    #[serde(rename = "Mea")]
    Meaningful,
    #[serde(rename = "Emp")]
    Empirical,
    #[serde(rename = "Rak")]
    RankAware,
    #[serde(rename = "Rag")]
    RangeAware,
    #[serde(rename = "Fre")]
    Frequency,
}

pub const DATA_FOCUSES_CF: [DataFocusCf; 7] = [
    DataFocusCf::Error,
    DataFocusCf::Blank,
    DataFocusCf::Meaningful,
    DataFocusCf::Empirical,
    DataFocusCf::RankAware,
    DataFocusCf::RangeAware,
    DataFocusCf::Frequency,
];

impl DataFocusCf {
    pub fn index(self) -> usize {
        DATA_FOCUSES_CF
            .iter()
            .position(|f| *f == self)
            .expect("listed")
    }

    pub fn code(self) -> &'static str {
        match self {
            DataFocusCf::Error => "Err",
            DataFocusCf::Blank => "Bla",
            DataFocusCf::Meaningful => "Mea",
            DataFocusCf::Empirical => "Emp",
            DataFocusCf::RankAware => "Rak",
            DataFocusCf::RangeAware => "Rag",
            DataFocusCf::Frequency => "Fre",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        DATA_FOCUSES_CF.into_iter().find(|f| f.code() == code)
    }

    /// Rank-, range- and empirical-aware focuses only apply to numeric fields.
    pub fn valid_for(self, ftype: FieldType) -> bool {
        match self {
            DataFocusCf::Empirical | DataFocusCf::RankAware | DataFocusCf::RangeAware => {
                ftype == FieldType::Numeric
            }
            _ => true,
        }
    }
}

/// The twelve conditional-formatting operation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperationCf {
    IsError,
    IsBlank,
    IsDuplicate,
    LessGreaterThan,
    TopBottomK,
    Between,
    EqualContains,
    EqualSet,
    DataBar,
    ColorScale,
    IconSet,
    PartitionSet,
}

pub const OPERATIONS_CF: [OperationCf; 12] = [
    OperationCf::IsError,
    OperationCf::IsBlank,
    OperationCf::IsDuplicate,
    OperationCf::LessGreaterThan,
    OperationCf::TopBottomK,
    OperationCf::Between,
    OperationCf::EqualContains,
    OperationCf::EqualSet,
    OperationCf::DataBar,
    OperationCf::ColorScale,
    OperationCf::IconSet,
    OperationCf::PartitionSet,
];

impl OperationCf {
    pub fn index(self) -> usize {
        OPERATIONS_CF
            .iter()
            .position(|o| *o == self)
            .expect("listed")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        OPERATIONS_CF.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            OperationCf::IsError => "IsError",
            OperationCf::IsBlank => "IsBlank",
            OperationCf::IsDuplicate => "IsDuplicate",
            OperationCf::LessGreaterThan => "LessGreaterThan",
            OperationCf::TopBottomK => "TopBottomK",
            OperationCf::Between => "Between",
            OperationCf::EqualContains => "EqualContains",
            OperationCf::EqualSet => "EqualSet",
            OperationCf::DataBar => "DataBar",
            OperationCf::ColorScale => "ColorScale",
            OperationCf::IconSet => "IconSet",
            OperationCf::PartitionSet => "PartitionSet",
        }
    }

    /// Operations whose presence alone marks the intent as comparison.
    pub fn implies_compare(self) -> bool {
        matches!(
            self,
            OperationCf::DataBar
                | OperationCf::ColorScale
                | OperationCf::IconSet
                | OperationCf::PartitionSet
                | OperationCf::EqualSet
        )
    }

    /// Multi-bucket operations take between 2 and 4 parameters.
    pub fn is_multi_parameter(self) -> bool {
        matches!(
            self,
            OperationCf::EqualSet
                | OperationCf::DataBar
                | OperationCf::ColorScale
                | OperationCf::IconSet
                | OperationCf::PartitionSet
        )
    }

    /// Number of parameters a recommendation materializes for this
    /// operation. `multi` configures the multi-bucket arity (clamped to 2..=4).
    pub fn param_count(self, multi: usize) -> usize {
        match self {
            OperationCf::IsDuplicate => 0,
            OperationCf::Between => 2,
            op if op.is_multi_parameter() => multi.clamp(2, 4),
            _ => 1,
        }
    }

    /// Whether a given parameter count satisfies the operation's arity.
    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            OperationCf::IsDuplicate => n == 0,
            OperationCf::Between => n == 2,
            op if op.is_multi_parameter() => (2..=4).contains(&n),
            _ => n == 1,
        }
    }

    /// Operations whose parameters must be numbers over a numeric field.
    pub fn needs_numeric_field(self) -> bool {
        matches!(
            self,
            OperationCf::LessGreaterThan
                | OperationCf::TopBottomK
                | OperationCf::Between
                | OperationCf::DataBar
                | OperationCf::ColorScale
                | OperationCf::IconSet
                | OperationCf::PartitionSet
        )
    }
}

/// The four chart types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    Line,
    Scatter,
    Pie,
}

pub const CHART_TYPES: [ChartType; 4] = [
    ChartType::Bar,
    ChartType::Line,
    ChartType::Scatter,
    ChartType::Pie,
];

impl ChartType {
    pub fn index(self) -> usize {
        CHART_TYPES.iter().position(|t| *t == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            ChartType::Bar => "bar",
            ChartType::Line => "line",
            ChartType::Scatter => "scatter",
            ChartType::Pie => "pie",
        }
    }

    /// Field type required for the x-axis, if the chart takes one.
    pub fn x_restriction(self) -> Option<FieldType> {
        match self {
            ChartType::Line => Some(FieldType::DateTime),
            ChartType::Bar => Some(FieldType::String),
            ChartType::Scatter => Some(FieldType::Numeric),
            ChartType::Pie => None,
        }
    }
}

/// User intent of a chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChartIntent {
    #[serde(rename = "Rlt")]
    Relationship,
    #[serde(rename = "Cps")]
    Composition,
    #[serde(rename = "Cpr")]
    Comparison,
    #[serde(rename = "Ttr")]
    TimeTrend,
}

pub const CHART_INTENTS: [ChartIntent; 4] = [
    ChartIntent::Relationship,
    ChartIntent::Composition,
    ChartIntent::Comparison,
    ChartIntent::TimeTrend,
];

impl ChartIntent {
    pub fn index(self) -> usize {
        CHART_INTENTS
            .iter()
            .position(|i| *i == self)
            .expect("listed")
    }

    /// Field type this intent requires on the x-axis, when it requires one.
    pub fn x_restriction(self) -> Option<FieldType> {
        match self {
            ChartIntent::TimeTrend => Some(FieldType::DateTime),
            ChartIntent::Comparison => Some(FieldType::String),
            ChartIntent::Relationship => Some(FieldType::Numeric),
            ChartIntent::Composition => None,
        }
    }
}

/// Data focus of a chart axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChartFocus {
    #[serde(rename = "Fmt")]
    DateFormat,
    #[serde(rename = "Caf")]
    CommonAffix,
    #[serde(rename = "Hsi")]
    HeaderSimilarity,
    #[serde(rename = "Rag")]
    RangeAware,
    #[serde(rename = "Fre")]
    Frequency,
    #[serde(rename = "Fty")]
    FieldType,
}

pub const CHART_FOCUSES: [ChartFocus; 6] = [
    ChartFocus::DateFormat,
    ChartFocus::CommonAffix,
    ChartFocus::HeaderSimilarity,
    ChartFocus::RangeAware,
    ChartFocus::Frequency,
    ChartFocus::FieldType,
];

impl ChartFocus {
    pub fn index(self) -> usize {
        CHART_FOCUSES
            .iter()
            .position(|f| *f == self)
            .expect("listed")
    }
}

/// Focuses considered when labeling an x-axis field.
pub const CHART_FOCUSES_X: [ChartFocus; 5] = [
    ChartFocus::DateFormat,
    ChartFocus::CommonAffix,
    ChartFocus::HeaderSimilarity,
    ChartFocus::Frequency,
    ChartFocus::FieldType,
];

/// Focuses considered when labeling a y-axis field.
pub const CHART_FOCUSES_Y: [ChartFocus; 4] = [
    ChartFocus::HeaderSimilarity,
    ChartFocus::RangeAware,
    ChartFocus::Frequency,
    ChartFocus::FieldType,
];

/// A conditional-formatting semantics label: one intent plus one or more
/// focuses, in canonical focus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfSemantics {
    pub intent: UserIntentCf,
    pub focuses: Vec<DataFocusCf>,
}

/// A chart semantics label: intents from the chart type plus per-axis
/// focuses and their union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSemantics {
    pub intents: Vec<ChartIntent>,
    pub focuses: Vec<ChartFocus>,
    pub x_focuses: Vec<ChartFocus>,
    pub y_focuses: Vec<ChartFocus>,
}

/// Mapping from (intent, focus) to the operations that realize it, in
/// preference order. Loadable from JSON as {"Det": {"Rag": [...], ...}, ...}.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentFocusMap {
    map: BTreeMap<(UserIntentCf, DataFocusCf), Vec<OperationCf>>,
}

impl Default for IntentFocusMap {
    fn default() -> Self {
        use DataFocusCf::*;
        use OperationCf::*;
        use UserIntentCf::*;
        let entries: [((UserIntentCf, DataFocusCf), &[OperationCf]); 14] = [
            ((Detect, Error), &[IsError]),
            ((Detect, Blank), &[IsBlank]),
            ((Detect, Frequency), &[IsDuplicate, EqualContains]),
            ((Detect, RankAware), &[TopBottomK]),
            (
                (Detect, RangeAware),
                &[EqualContains, Between, LessGreaterThan],
            ),
            ((Detect, Meaningful), &[EqualContains]),
            (
                (Detect, Empirical),
                &[LessGreaterThan, Between, EqualContains],
            ),
            (
                (Compare, RangeAware),
                &[ColorScale, DataBar, PartitionSet, IconSet, Between],
            ),
            ((Compare, Frequency), &[EqualSet]),
            ((Compare, Meaningful), &[EqualSet]),
            ((Compare, Empirical), &[PartitionSet, LessGreaterThan]),
            ((Compare, RankAware), &[IconSet, PartitionSet]),
            ((Compare, Error), &[IsError]),
            ((Compare, Blank), &[IsBlank]),
        ];
        let map = entries.into_iter().map(|(k, v)| (k, v.to_vec())).collect();
        IntentFocusMap { map }
    }
}

impl IntentFocusMap {
    pub fn get(&self, intent: UserIntentCf, focus: DataFocusCf) -> Result<&[OperationCf]> {
        self.map
            .get(&(intent, focus))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownPair(format!("({}, {})", intent.code(), focus.code())))
    }

    /// Every (intent, focus) pair maps to at least one operation and every
    /// operation appears in at least one pair.
    pub fn validate(&self) -> Result<()> {
        for intent in USER_INTENTS_CF {
            for focus in DATA_FOCUSES_CF {
                let ops = self.get(intent, focus)?;
                if ops.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "empty operation list for ({}, {})",
                        intent.code(),
                        focus.code()
                    )));
                }
            }
        }
        for op in OPERATIONS_CF {
            if !self.map.values().any(|ops| ops.contains(&op)) {
                return Err(Error::InvalidConfig(format!(
                    "operation {} unmapped",
                    op.name()
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let wire: BTreeMap<String, BTreeMap<String, Vec<OperationCf>>> =
            serde_json::from_str(&text)?;
        let mut map = BTreeMap::new();
        for (icode, by_focus) in wire {
            let intent = UserIntentCf::from_code(&icode)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown intent '{icode}'")))?;
            for (fcode, ops) in by_focus {
                let focus = DataFocusCf::from_code(&fcode)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown focus '{fcode}'")))?;
                map.insert((intent, focus), ops);
            }
        }
        let out = IntentFocusMap { map };
        out.validate()?;
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut wire: BTreeMap<String, BTreeMap<String, Vec<&str>>> = BTreeMap::new();
        for ((intent, focus), ops) in &self.map {
            wire.entry(intent.code().to_string()).or_default().insert(
                focus.code().to_string(),
                ops.iter().map(|o| o.name()).collect(),
            );
        }
        serde_json::to_value(wire).expect("serializable")
    }
}

/// Rule-based user intent of the records applied to one field: comparison
/// when two or more records exist or any record uses a multi-set operation,
/// detection otherwise.
pub fn label_intent_cf(records: &[&AnalysisRecord]) -> Result<UserIntentCf> {
    let ops: Vec<OperationCf> = records
        .iter()
        .filter_map(|r| match r {
            AnalysisRecord::Cf { operation, .. } => Some(*operation),
            AnalysisRecord::Chart { .. } => None,
        })
        .collect();
    if ops.is_empty() {
        return Err(Error::EmptyRecordSet);
    }
    if ops.len() >= 2 || ops.iter().any(|o| o.implies_compare()) {
        Ok(UserIntentCf::Compare)
    } else {
        Ok(UserIntentCf::Detect)
    }
}

fn param_matches_cell(p: &ParamValue, c: &Cell) -> bool {
    match (p, &c.kind) {
        (ParamValue::Number(v), CellKind::Number(x)) => (v - x).abs() <= 1e-9 * v.abs().max(1.0),
        (ParamValue::Text(t), CellKind::Text | CellKind::Error | CellKind::Date(_)) => {
            c.raw.trim() == t
        }
        (ParamValue::Blank, CellKind::Blank) => true,
        _ => false,
    }
}

fn number_params(params: &[ParamValue]) -> Vec<f64> {
    params
        .iter()
        .filter_map(|p| match p {
            ParamValue::Number(v) => Some(*v),
            _ => None,
        })
        .collect()
}

/// Rule-based data focuses of one record: compares the user-created
/// parameters against the field's common signatures and the vocabularies.
/// Multi-label; the empty set is possible for records whose parameters
/// match nothing.
pub fn label_focus_cf(
    record: &AnalysisRecord,
    field: &Field,
    sigs: &[CellSignature],
    vocab: &Vocabulary,
) -> Vec<DataFocusCf> {
    let (operation, params) = match record {
        AnalysisRecord::Cf {
            operation,
            parameters,
            ..
        } => (*operation, parameters.as_slice()),
        AnalysisRecord::Chart { .. } => return Vec::new(),
    };
    let mut out = BTreeSet::new();

    if operation == OperationCf::IsError {
        out.insert(DataFocusCf::Error);
    }
    if operation == OperationCf::IsBlank {
        out.insert(DataFocusCf::Blank);
    }

    let cells_matching = |p: &ParamValue| -> Vec<usize> {
        field
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| param_matches_cell(p, c))
            .map(|(i, _)| i)
            .collect()
    };

    // Frequency: duplicate detection, or a parameter pointing at a
    // common-frequency value.
    let param_has_flag = |flag: fn(&CellSignature) -> bool| {
        params
            .iter()
            .any(|p| cells_matching(p).iter().any(|&i| flag(&sigs[i])))
    };
    if operation == OperationCf::IsDuplicate || param_has_flag(|s| s.is_common_frequency) {
        out.insert(DataFocusCf::Frequency);
    }

    if field.ftype == FieldType::Numeric {
        if operation == OperationCf::TopBottomK || param_has_flag(|s| s.is_common_rank) {
            out.insert(DataFocusCf::RankAware);
        }
        let range_values = common_range_values(field).unwrap_or_default();
        let nums = number_params(params);
        if nums.iter().any(|v| {
            range_values
                .iter()
                .any(|m| (v - m).abs() <= 1e-9 * m.abs().max(1.0))
        }) {
            out.insert(DataFocusCf::RangeAware);
        }
        if nums.iter().any(|v| vocab.is_empirical(*v)) {
            out.insert(DataFocusCf::Empirical);
        }
    }

    // Meaningful: a parameter is itself a meaningless token, or the field
    // contains meaningless values and the record's equality selection covers
    // exactly their complement.
    let direct_meaningless = params.iter().any(|p| match p {
        ParamValue::Text(t) => vocab.is_meaningless(t),
        _ => false,
    });
    let complement = if matches!(
        operation,
        OperationCf::EqualContains | OperationCf::EqualSet
    ) {
        selects_meaningless_complement(params, field, sigs)
    } else {
        false
    };
    if direct_meaningless || complement {
        out.insert(DataFocusCf::Meaningful);
    }

    out.into_iter().collect()
}

/// True when the field holds meaningless values and the equality parameters
/// cover every distinct non-meaningless value while touching none of the
/// meaningless ones.
fn selects_meaningless_complement(
    params: &[ParamValue],
    field: &Field,
    sigs: &[CellSignature],
) -> bool {
    let meaningless_present = sigs.iter().any(|s| s.is_meaningless);
    if !meaningless_present || params.is_empty() {
        return false;
    }
    let matched_by_param = |i: usize| {
        params
            .iter()
            .any(|p| param_matches_cell(p, &field.cells[i]))
    };
    let mut any_meaningful = false;
    for (i, c) in field.cells.iter().enumerate() {
        if c.is_blank() {
            continue;
        }
        if sigs[i].is_meaningless {
            if matched_by_param(i) {
                return false; // a meaningless value is selected
            }
        } else {
            any_meaningful = true;
            if !matched_by_param(i) {
                return false; // complement not fully covered
            }
        }
    }
    // Every parameter must reference an actual cell value.
    any_meaningful
        && params
            .iter()
            .all(|p| field.cells.iter().any(|c| param_matches_cell(p, c)))
}

/// Ordered union of the mapped operations for every decoded focus: focuses
/// iterate in canonical order, each contributing its mapped operations in
/// map order, first occurrence wins.
pub fn candidate_operations(
    intent: UserIntentCf,
    focuses: &[DataFocusCf],
    map: &IntentFocusMap,
) -> Result<Vec<OperationCf>> {
    let mut ordered: Vec<DataFocusCf> = focuses.to_vec();
    ordered.sort_by_key(|f| f.index());
    ordered.dedup();
    let mut out = Vec::new();
    for focus in ordered {
        for op in map.get(intent, focus)? {
            if !out.contains(op) {
                out.push(*op);
            }
        }
    }
    Ok(out)
}

/// Set scores of operations outside the allowed set to negative infinity.
pub fn filter_operation_scores(scores: &[f64], allowed: &[OperationCf]) -> Vec<f64> {
    debug_assert_eq!(scores.len(), OPERATIONS_CF.len());
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if allowed.iter().any(|op| op.index() == i) {
                *s
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Where a parameter candidate came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    /// The value of a concrete cell.
    Cell { index: usize },
    /// A non-meaningless cell value complementary to the meaningless ones.
    ComplementCell { index: usize },
    /// The field mean (derived statistic, not necessarily a cell value).
    Mean,
    /// The (max + min) / 2 midpoint.
    Midpoint,
    /// A top/bottom-k count.
    TopK,
    /// The blank sentinel.
    BlankSentinel,
    /// An empirical vocabulary number applicable to the field's range.
    Empirical,
    /// Marker that duplicate values exist (supports IsDuplicate).
    Duplicate,
}

/// One candidate parameter value with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCandidate {
    pub value: ParamValue,
    pub provenance: Provenance,
}

fn cell_param_value(c: &Cell) -> ParamValue {
    match c.kind {
        CellKind::Number(v) => ParamValue::Number(v),
        CellKind::Blank => ParamValue::Blank,
        _ => ParamValue::Text(c.raw.trim().to_string()),
    }
}

/// Candidate parameter values for one decoded focus, pruned per the common
/// signatures. Candidates are deduplicated by value, first provenance wins.
pub fn candidate_parameters_for_focus(
    field: &Field,
    sigs: &[CellSignature],
    focus: DataFocusCf,
    vocab: &Vocabulary,
) -> Result<Vec<ParamCandidate>> {
    if !focus.valid_for(field.ftype) {
        return Err(Error::FocusTypeMismatch {
            focus: focus.code().to_string(),
            ftype: field.ftype.as_str().to_string(),
        });
    }
    let mut out: Vec<ParamCandidate> = Vec::new();
    let push = |value: ParamValue, provenance: Provenance, out: &mut Vec<ParamCandidate>| {
        if !out.iter().any(|c| c.value == value) {
            out.push(ParamCandidate { value, provenance });
        }
    };

    match focus {
        DataFocusCf::Error => {
            for (i, c) in field.cells.iter().enumerate() {
                if c.is_error() {
                    push(
                        ParamValue::Text(c.raw.trim().to_string()),
                        Provenance::Cell { index: i },
                        &mut out,
                    );
                }
            }
        }
        DataFocusCf::Blank => {
            out.push(ParamCandidate {
                value: ParamValue::Blank,
                provenance: Provenance::BlankSentinel,
            });
        }
        DataFocusCf::Meaningful => {
            for (i, c) in field.cells.iter().enumerate() {
                if sigs[i].is_meaningless {
                    push(cell_param_value(c), Provenance::Cell { index: i }, &mut out);
                }
            }
            let has_meaningless = sigs.iter().any(|s| s.is_meaningless);
            if has_meaningless {
                for (i, c) in field.cells.iter().enumerate() {
                    if !c.is_blank() && !sigs[i].is_meaningless {
                        push(
                            cell_param_value(c),
                            Provenance::ComplementCell { index: i },
                            &mut out,
                        );
                    }
                }
            }
        }
        DataFocusCf::Empirical => {
            let nums = field.numbers();
            let (min, max) = (
                nums.iter().cloned().fold(f64::INFINITY, f64::min),
                nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            for &e in &vocab.empirical {
                let cell_idx = field
                    .cells
                    .iter()
                    .position(|c| c.number().is_some_and(|v| (v - e).abs() <= 1e-9));
                if let Some(i) = cell_idx {
                    push(
                        ParamValue::Number(e),
                        Provenance::Cell { index: i },
                        &mut out,
                    );
                } else if !nums.is_empty() && e >= min && e <= max {
                    push(ParamValue::Number(e), Provenance::Empirical, &mut out);
                }
            }
        }
        DataFocusCf::RankAware => {
            let n_ranked = field.numbers().len();
            for (i, c) in field.cells.iter().enumerate() {
                if sigs[i].is_common_rank {
                    push(cell_param_value(c), Provenance::Cell { index: i }, &mut out);
                }
            }
            for k in [1usize, 3, 5, 10, 20] {
                if k <= n_ranked {
                    push(ParamValue::Number(k as f64), Provenance::TopK, &mut out);
                }
            }
        }
        DataFocusCf::RangeAware => {
            let values = common_range_values(field)?;
            let nums = field.numbers();
            let mean = nums.iter().sum::<f64>() / nums.len().max(1) as f64;
            let min = nums.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let midpoint = (max + min) / 2.0;
            for v in values {
                let provenance = if (v - mean).abs() <= 1e-12 * mean.abs().max(1.0) {
                    Provenance::Mean
                } else if (v - midpoint).abs() <= 1e-12 * midpoint.abs().max(1.0) {
                    Provenance::Midpoint
                } else {
                    let idx = field
                        .cells
                        .iter()
                        .position(|c| c.number().is_some_and(|x| (x - v).abs() <= 1e-12));
                    match idx {
                        Some(i) => Provenance::Cell { index: i },
                        None => Provenance::Mean,
                    }
                };
                push(ParamValue::Number(v), provenance, &mut out);
            }
        }
        DataFocusCf::Frequency => {
            for (i, c) in field.cells.iter().enumerate() {
                if sigs[i].is_common_frequency {
                    push(cell_param_value(c), Provenance::Cell { index: i }, &mut out);
                }
            }
            let has_repeats = sigs.iter().any(|s| s.freq_count >= 2);
            if has_repeats {
                out.push(ParamCandidate {
                    value: ParamValue::Text("is_duplicate".to_string()),
                    provenance: Provenance::Duplicate,
                });
            }
        }
    }
    Ok(out)
}

/// Rule-based semantics of an existing chart record: intents from the chart
/// type, focuses from the axis fields' signatures (x and y use different
/// focus sets).
pub fn label_semantics_chart(
    chart: &AnalysisRecord,
    table: &Table,
    field_sigs: &[FieldSignature],
) -> Result<ChartSemantics> {
    let (chart_type, x_fields, y_fields) = match chart {
        AnalysisRecord::Chart {
            chart_type,
            x_fields,
            y_fields,
            ..
        } => (*chart_type, x_fields.as_slice(), y_fields.as_slice()),
        AnalysisRecord::Cf { .. } => {
            return Err(Error::InvalidSpec("expected a chart record".to_string()))
        }
    };
    for &i in x_fields.iter().chain(y_fields.iter()) {
        if i >= table.fields.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: table.fields.len(),
            });
        }
    }

    let mut intents = BTreeSet::new();
    match chart_type {
        ChartType::Pie => {
            intents.insert(ChartIntent::Composition);
        }
        ChartType::Scatter => {
            intents.insert(ChartIntent::Relationship);
        }
        ChartType::Bar => {
            intents.insert(ChartIntent::Comparison);
        }
        ChartType::Line => {
            let date_x = x_fields
                .iter()
                .any(|&i| table.fields[i].ftype == FieldType::DateTime);
            intents.insert(if date_x {
                ChartIntent::TimeTrend
            } else {
                ChartIntent::Comparison
            });
        }
    }
    let intents: Vec<ChartIntent> = intents.into_iter().collect();

    let field_has_repeats = |i: usize| {
        field_sigs[i]
            .metadata
            .first()
            .map(|r| *r < 1.0 - 1e-12 && *r > 0.0)
            .unwrap_or(false)
    };
    let x_type_ok = |i: usize| {
        intents
            .iter()
            .filter_map(|it| it.x_restriction())
            .any(|req| table.fields[i].ftype == req)
    };

    let mut x_focuses = BTreeSet::new();
    for &i in x_fields {
        let s = &field_sigs[i];
        if s.is_date_format {
            x_focuses.insert(ChartFocus::DateFormat);
        }
        if s.is_common_affix {
            x_focuses.insert(ChartFocus::CommonAffix);
        }
        if s.is_common_header {
            x_focuses.insert(ChartFocus::HeaderSimilarity);
        }
        if field_has_repeats(i) {
            x_focuses.insert(ChartFocus::Frequency);
        }
        if x_type_ok(i) {
            x_focuses.insert(ChartFocus::FieldType);
        }
    }
    let mut y_focuses = BTreeSet::new();
    for &i in y_fields {
        let s = &field_sigs[i];
        if s.is_common_header {
            y_focuses.insert(ChartFocus::HeaderSimilarity);
        }
        if s.is_common_range {
            y_focuses.insert(ChartFocus::RangeAware);
        }
        if field_has_repeats(i) {
            y_focuses.insert(ChartFocus::Frequency);
        }
        if table.fields[i].ftype == FieldType::Numeric {
            y_focuses.insert(ChartFocus::FieldType);
        }
    }
    let focuses: Vec<ChartFocus> = x_focuses
        .union(&y_focuses)
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(ChartSemantics {
        intents,
        focuses,
        x_focuses: x_focuses.into_iter().collect(),
        y_focuses: y_focuses.into_iter().collect(),
    })
}

// ---------------------------------------------------------------------------
// Executor: applies Table-style condition forms to a field.
// ---------------------------------------------------------------------------

/// Cells selected by a conditional-formatting record. The merged
/// complementary forms are canonicalized: LessGreaterThan selects v > p,
/// Between is inclusive, multi-bucket operations format every number cell.
pub fn select_cells(operation: OperationCf, params: &[ParamValue], field: &Field) -> Vec<usize> {
    let number_cells = || -> Vec<(usize, f64)> {
        field
            .cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.number().map(|v| (i, v)))
            .collect()
    };
    match operation {
        OperationCf::IsError => field
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_error())
            .map(|(i, _)| i)
            .collect(),
        OperationCf::IsBlank => field
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_blank())
            .map(|(i, _)| i)
            .collect(),
        OperationCf::IsDuplicate => {
            let mut counts: BTreeMap<crate::table::ValueKey, usize> = BTreeMap::new();
            for c in &field.cells {
                if !c.is_blank() {
                    *counts.entry(c.value_key()).or_insert(0) += 1;
                }
            }
            field
                .cells
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_blank() && counts[&c.value_key()] >= 2)
                .map(|(i, _)| i)
                .collect()
        }
        OperationCf::LessGreaterThan => {
            let p = match number_params(params).first() {
                Some(p) => *p,
                None => return Vec::new(),
            };
            number_cells()
                .into_iter()
                .filter(|(_, v)| *v > p)
                .map(|(i, _)| i)
                .collect()
        }
        OperationCf::TopBottomK => {
            let k = match number_params(params).first() {
                Some(p) if *p >= 1.0 => p.round() as usize,
                _ => return Vec::new(),
            };
            let mut cells = number_cells();
            cells.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
            let mut idx: Vec<usize> = cells.into_iter().take(k).map(|(i, _)| i).collect();
            idx.sort_unstable();
            idx
        }
        OperationCf::Between => {
            let nums = number_params(params);
            if nums.len() < 2 {
                return Vec::new();
            }
            let lo = nums[0].min(nums[1]);
            let hi = nums[0].max(nums[1]);
            number_cells()
                .into_iter()
                .filter(|(_, v)| *v >= lo && *v <= hi)
                .map(|(i, _)| i)
                .collect()
        }
        OperationCf::EqualContains | OperationCf::EqualSet => field
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_blank() && params.iter().any(|p| param_matches_cell(p, c)))
            .map(|(i, _)| i)
            .collect(),
        OperationCf::DataBar
        | OperationCf::ColorScale
        | OperationCf::IconSet
        | OperationCf::PartitionSet => number_cells().into_iter().map(|(i, _)| i).collect(),
    }
}

/// Cells that justify a record's parameters, used as golden labels for the
/// reference head: error/blank/duplicate cells for the parameterless
/// detectors, the rank-k boundary cells for top/bottom-k, and cells whose
/// value matches a parameter otherwise.
pub fn reference_cells(
    operation: OperationCf,
    params: &[ParamValue],
    field: &Field,
    sigs: &[CellSignature],
) -> Vec<usize> {
    match operation {
        OperationCf::IsError => (0..field.cells.len())
            .filter(|&i| sigs[i].is_error)
            .collect(),
        OperationCf::IsBlank => (0..field.cells.len())
            .filter(|&i| sigs[i].is_blank)
            .collect(),
        OperationCf::IsDuplicate => (0..field.cells.len())
            .filter(|&i| sigs[i].freq_count >= 2)
            .collect(),
        OperationCf::TopBottomK => {
            let k = match number_params(params).first() {
                Some(p) if *p >= 1.0 => p.round() as usize,
                _ => return Vec::new(),
            };
            (0..field.cells.len())
                .filter(|&i| sigs[i].desc_rank == k || sigs[i].asc_rank == k)
                .collect()
        }
        _ => (0..field.cells.len())
            .filter(|&i| {
                params
                    .iter()
                    .any(|p| param_matches_cell(p, &field.cells[i]))
            })
            .collect(),
    }
}

/// Fraction of the field's cells the record's condition selects.
pub fn record_coverage(operation: OperationCf, params: &[ParamValue], field: &Field) -> f64 {
    if field.cells.is_empty() {
        return 0.0;
    }
    select_cells(operation, params, field).len() as f64 / field.cells.len() as f64
}

/// Executability check: arity and parameter types hold, and the condition
/// selects a non-degenerate, non-universal subset of its universe. IsError
/// and IsBlank may legitimately select nothing.
pub fn validate_record(operation: OperationCf, params: &[ParamValue], field: &Field) -> bool {
    if !operation.arity_ok(params.len()) {
        return false;
    }
    if operation.needs_numeric_field() {
        if field.ftype != FieldType::Numeric {
            return false;
        }
        if number_params(params).len() != params.len() {
            return false;
        }
    }
    if operation == OperationCf::IsBlank && !matches!(params, [ParamValue::Blank]) {
        return false;
    }

    let n_numbers = field.numbers().len();
    let n_nonblank = field.cells.iter().filter(|c| !c.is_blank()).count();
    let selected = select_cells(operation, params, field).len();

    match operation {
        OperationCf::IsError | OperationCf::IsBlank => selected < field.cells.len(),
        OperationCf::TopBottomK => {
            let k = number_params(params)[0];
            k >= 1.0 && (k.round() as usize) < n_numbers && (k - k.round()).abs() < 1e-9
        }
        OperationCf::DataBar
        | OperationCf::ColorScale
        | OperationCf::IconSet
        | OperationCf::PartitionSet => {
            let mut bounds = number_params(params);
            bounds.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            if bounds.windows(2).any(|w| w[0] >= w[1]) {
                return false; // boundaries must be strictly increasing
            }
            if n_numbers == 0 {
                return false;
            }
            // The induced partition must actually split the values.
            let nums = field.numbers();
            let mut bucket_nonempty = vec![false; bounds.len() + 1];
            for v in nums {
                let b = bounds.iter().filter(|&&x| v >= x).count();
                bucket_nonempty[b] = true;
            }
            bucket_nonempty.iter().filter(|b| **b).count() >= 2
        }
        OperationCf::IsDuplicate | OperationCf::EqualContains | OperationCf::EqualSet => {
            selected >= 1 && selected < n_nonblank
        }
        OperationCf::LessGreaterThan | OperationCf::Between => {
            selected >= 1 && selected < n_numbers
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnalysisRecord;
    use crate::signatures::compute_cell_signatures;
    use crate::table::Field;

    fn field_of(values: &[&str]) -> Field {
        let raw: Vec<String> = values.iter().map(|s| s.to_string()).collect();
        Field::from_raw(0, "f", &raw)
    }

    fn cf(op: OperationCf, params: Vec<ParamValue>) -> AnalysisRecord {
        AnalysisRecord::Cf {
            table_id: "t".to_string(),
            field_index: 0,
            operation: op,
            parameters: params,
            coverage: None,
        }
    }

    #[test]
    fn intent_rules() {
        let a = cf(
            OperationCf::EqualContains,
            vec![ParamValue::Text("a".into())],
        );
        let b = cf(
            OperationCf::EqualContains,
            vec![ParamValue::Text("b".into())],
        );
        assert_eq!(label_intent_cf(&[&a, &b]).unwrap(), UserIntentCf::Compare);
        assert_eq!(label_intent_cf(&[&a]).unwrap(), UserIntentCf::Detect);
        let c = cf(
            OperationCf::ColorScale,
            vec![ParamValue::Number(1.0), ParamValue::Number(2.0)],
        );
        assert_eq!(label_intent_cf(&[&c]).unwrap(), UserIntentCf::Compare);
        assert!(matches!(label_intent_cf(&[]), Err(Error::EmptyRecordSet)));
    }

    #[test]
    fn intent_is_order_invariant() {
        let a = cf(OperationCf::IsError, vec![ParamValue::Text("#REF!".into())]);
        let b = cf(OperationCf::IsBlank, vec![ParamValue::Blank]);
        assert_eq!(
            label_intent_cf(&[&a, &b]).unwrap(),
            label_intent_cf(&[&b, &a]).unwrap()
        );
    }

    #[test]
    fn focus_rules() {
        let vocab = Vocabulary::default();
        // Mean of [60, 70, 80, 94] is 76.
        let f = field_of(&["60", "70", "80", "94"]);
        let sigs = compute_cell_signatures(&f, &vocab);
        let r = cf(OperationCf::LessGreaterThan, vec![ParamValue::Number(76.0)]);
        assert_eq!(
            label_focus_cf(&r, &f, &sigs, &vocab),
            vec![DataFocusCf::RangeAware]
        );

        let r = cf(OperationCf::IsError, vec![ParamValue::Text("#REF!".into())]);
        assert_eq!(
            label_focus_cf(&r, &f, &sigs, &vocab),
            vec![DataFocusCf::Error]
        );

        // Parameter 0 is an empirical number.
        let f = field_of(&["-5", "3", "8"]);
        let sigs = compute_cell_signatures(&f, &vocab);
        let r = cf(OperationCf::LessGreaterThan, vec![ParamValue::Number(0.0)]);
        assert!(label_focus_cf(&r, &f, &sigs, &vocab).contains(&DataFocusCf::Empirical));
    }

    #[test]
    fn focus_never_numeric_only_on_string_fields() {
        let vocab = Vocabulary::default();
        let f = field_of(&["a", "b", "a", "c"]);
        let sigs = compute_cell_signatures(&f, &vocab);
        let r = cf(
            OperationCf::EqualContains,
            vec![ParamValue::Text("a".into())],
        );
        let focuses = label_focus_cf(&r, &f, &sigs, &vocab);
        assert!(!focuses.contains(&DataFocusCf::RankAware));
        assert!(!focuses.contains(&DataFocusCf::RangeAware));
        assert!(!focuses.contains(&DataFocusCf::Empirical));
    }

    #[test]
    fn meaningful_complement_rule() {
        let vocab = Vocabulary::default();
        let f = field_of(&["ACCEPTED", "Unknown", "ACCEPTED", "ACCEPTED"]);
        let sigs = compute_cell_signatures(&f, &vocab);
        let r = cf(
            OperationCf::EqualContains,
            vec![ParamValue::Text("ACCEPTED".into())],
        );
        assert!(label_focus_cf(&r, &f, &sigs, &vocab).contains(&DataFocusCf::Meaningful));

        // Direct rule: the parameter is itself meaningless.
        let r = cf(
            OperationCf::EqualContains,
            vec![ParamValue::Text("Unknown".into())],
        );
        assert!(label_focus_cf(&r, &f, &sigs, &vocab).contains(&DataFocusCf::Meaningful));

        // No meaningless values in the field: no Meaningful label.
        let g = field_of(&["A", "B", "A"]);
        let gs = compute_cell_signatures(&g, &vocab);
        let r = cf(
            OperationCf::EqualContains,
            vec![ParamValue::Text("A".into())],
        );
        assert!(!label_focus_cf(&r, &g, &gs, &vocab).contains(&DataFocusCf::Meaningful));
    }

    #[test]
    fn candidate_operation_union() {
        let map = IntentFocusMap::default();
        map.validate().unwrap();
        assert_eq!(
            candidate_operations(UserIntentCf::Detect, &[DataFocusCf::RangeAware], &map).unwrap(),
            vec![
                OperationCf::EqualContains,
                OperationCf::Between,
                OperationCf::LessGreaterThan
            ]
        );
        assert_eq!(
            candidate_operations(UserIntentCf::Detect, &[DataFocusCf::Error], &map).unwrap(),
            vec![OperationCf::IsError]
        );
        assert_eq!(
            candidate_operations(UserIntentCf::Compare, &[DataFocusCf::RangeAware], &map).unwrap(),
            vec![
                OperationCf::ColorScale,
                OperationCf::DataBar,
                OperationCf::PartitionSet,
                OperationCf::IconSet,
                OperationCf::Between
            ]
        );
        // Union across focuses dedupes while keeping first position.
        let ops = candidate_operations(
            UserIntentCf::Detect,
            &[DataFocusCf::RangeAware, DataFocusCf::Empirical],
            &map,
        )
        .unwrap();
        // Empirical precedes RangeAware in canonical focus order.
        assert_eq!(
            ops,
            vec![
                OperationCf::LessGreaterThan,
                OperationCf::Between,
                OperationCf::EqualContains
            ]
        );
    }

    #[test]
    fn score_filtering() {
        let scores = vec![0.5; 12];
        let filtered = filter_operation_scores(&scores, &[OperationCf::IsError]);
        assert_eq!(filtered[OperationCf::IsError.index()], 0.5);
        assert!(filtered
            .iter()
            .enumerate()
            .all(|(i, s)| { i == OperationCf::IsError.index() || *s == f64::NEG_INFINITY }));
        let all = filter_operation_scores(&scores, &OPERATIONS_CF);
        assert_eq!(all, scores);
        // A filtered score never rises above an allowed score.
        let mut varied: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        varied[OperationCf::TopBottomK.index()] = 0.99;
        let filtered =
            filter_operation_scores(&varied, &[OperationCf::EqualContains, OperationCf::Between]);
        let argmax = filtered
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert!(
            argmax == OperationCf::EqualContains.index() || argmax == OperationCf::Between.index()
        );
    }

    #[test]
    fn parameter_candidates_per_focus() {
        let vocab = Vocabulary::default();
        // Competition-like scores: the value at descending position 3 is a
        // rank-aware candidate supporting "top 3".
        let f = field_of(&["9.5", "9.8", "9.1", "8.7", "9.9", "8.2", "9.0"]);
        let sigs = compute_cell_signatures(&f, &vocab);
        let cands =
            candidate_parameters_for_focus(&f, &sigs, DataFocusCf::RankAware, &vocab).unwrap();
        assert!(cands.iter().any(|c| c.value == ParamValue::Number(9.5)
            && matches!(c.provenance, Provenance::Cell { .. })));
        assert!(cands
            .iter()
            .any(|c| c.value == ParamValue::Number(3.0) && c.provenance == Provenance::TopK));

        // Mean 76 appears among range-aware candidates.
        let f = field_of(&["60", "70", "80", "94"]);
        let sigs = compute_cell_signatures(&f, &vocab);
        let cands =
            candidate_parameters_for_focus(&f, &sigs, DataFocusCf::RangeAware, &vocab).unwrap();
        assert!(cands.iter().any(|c| c.value == ParamValue::Number(76.0)));

        // All-distinct text field: no frequency candidates at all.
        let f = field_of(&["a", "b", "c", "d"]);
        let sigs = compute_cell_signatures(&f, &vocab);
        let cands =
            candidate_parameters_for_focus(&f, &sigs, DataFocusCf::Frequency, &vocab).unwrap();
        assert!(cands.is_empty());

        // Focus/type mismatch errors out.
        assert!(matches!(
            candidate_parameters_for_focus(&f, &sigs, DataFocusCf::RankAware, &vocab),
            Err(Error::FocusTypeMismatch { .. })
        ));
    }

    #[test]
    fn map_and_candidates_are_arity_consistent() {
        // For every (intent, focus) pair, every mapped operation can fill
        // its arity from the focus's candidates on a suitable field.
        let vocab = Vocabulary::default();
        let map = IntentFocusMap::default();
        let fields: Vec<(DataFocusCf, Field)> = vec![
            (
                DataFocusCf::Error,
                field_of(&["1", "#REF!", "2", "#REF!", "3"]),
            ),
            (DataFocusCf::Blank, field_of(&["a", "", "b", ""])),
            (
                DataFocusCf::Meaningful,
                field_of(&["GOOD", "none", "GOOD", "BAD"]),
            ),
            (
                DataFocusCf::Empirical,
                field_of(&["-5", "3", "8", "52", "96"]),
            ),
            (
                DataFocusCf::RankAware,
                field_of(&["5", "9", "3", "7", "11", "13"]),
            ),
            (DataFocusCf::RangeAware, field_of(&["10", "22", "34", "78"])),
            (
                DataFocusCf::Frequency,
                field_of(&["a", "a", "a", "b", "b", "c"]),
            ),
        ];
        for intent in USER_INTENTS_CF {
            for (focus, field) in &fields {
                let sigs = compute_cell_signatures(field, &vocab);
                let cands = candidate_parameters_for_focus(field, &sigs, *focus, &vocab).unwrap();
                let usable = cands
                    .iter()
                    .filter(|c| c.provenance != Provenance::Duplicate)
                    .count();
                for op in map.get(intent, *focus).unwrap() {
                    let needed = op.param_count(2);
                    assert!(
                        usable >= needed || *op == OperationCf::IsDuplicate,
                        "({:?}, {:?}) -> {:?} needs {} params, {} candidates",
                        intent,
                        focus,
                        op,
                        needed,
                        usable
                    );
                }
            }
        }
    }

    #[test]
    fn chart_labeling() {
        let rows = vec![
            vec!["date".to_string(), "sales_total".to_string()],
            vec!["2021-01-01".to_string(), "5".to_string()],
            vec!["2021-02-01".to_string(), "8".to_string()],
            vec!["2021-03-01".to_string(), "6".to_string()],
        ];
        let t = crate::table::parse_table(&rows, true, "t").unwrap();
        let vocab = Vocabulary::default();
        let sigs: Vec<FieldSignature> = (0..2)
            .map(|i| {
                crate::signatures::compute_field_signatures(
                    &t,
                    i,
                    &vocab,
                    &vocab.keywords_x,
                    &vocab.keywords_y,
                )
                .unwrap()
            })
            .collect();
        let chart = AnalysisRecord::Chart {
            table_id: "t".to_string(),
            chart_type: ChartType::Line,
            x_fields: vec![0],
            y_fields: vec![1],
        };
        let sem = label_semantics_chart(&chart, &t, &sigs).unwrap();
        assert!(sem.intents.contains(&ChartIntent::TimeTrend));
        assert!(sem.x_focuses.contains(&ChartFocus::DateFormat));
        assert!(sem.x_focuses.contains(&ChartFocus::FieldType));
        assert!(sem.y_focuses.contains(&ChartFocus::FieldType));

        let pie = AnalysisRecord::Chart {
            table_id: "t".to_string(),
            chart_type: ChartType::Pie,
            x_fields: vec![],
            y_fields: vec![1],
        };
        let sem = label_semantics_chart(&pie, &t, &sigs).unwrap();
        assert!(sem.intents.contains(&ChartIntent::Composition));

        let bad = AnalysisRecord::Chart {
            table_id: "t".to_string(),
            chart_type: ChartType::Bar,
            x_fields: vec![7],
            y_fields: vec![1],
        };
        assert!(matches!(
            label_semantics_chart(&bad, &t, &sigs),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn executor_selection_and_validity() {
        let f = field_of(&["60", "70", "80", "94"]);
        let sel = select_cells(
            OperationCf::LessGreaterThan,
            &[ParamValue::Number(76.0)],
            &f,
        );
        assert_eq!(sel, vec![2, 3]);
        assert!(validate_record(
            OperationCf::LessGreaterThan,
            &[ParamValue::Number(76.0)],
            &f
        ));
        // Universal selection is invalid.
        assert!(!validate_record(
            OperationCf::LessGreaterThan,
            &[ParamValue::Number(0.0)],
            &f
        ));

        let sel = select_cells(OperationCf::TopBottomK, &[ParamValue::Number(3.0)], &f);
        assert_eq!(sel, vec![1, 2, 3]);
        assert!(validate_record(
            OperationCf::TopBottomK,
            &[ParamValue::Number(3.0)],
            &f
        ));
        assert!(!validate_record(
            OperationCf::TopBottomK,
            &[ParamValue::Number(4.0)],
            &f
        ));

        let e = field_of(&["1", "#REF!", "2"]);
        assert_eq!(
            select_cells(
                OperationCf::IsError,
                &[ParamValue::Text("#REF!".into())],
                &e
            ),
            vec![1]
        );
        assert!(validate_record(
            OperationCf::IsError,
            &[ParamValue::Text("#REF!".into())],
            &e
        ));

        let buckets = validate_record(
            OperationCf::ColorScale,
            &[ParamValue::Number(70.0), ParamValue::Number(85.0)],
            &f,
        );
        assert!(buckets);
        // Equal boundaries are rejected.
        assert!(!validate_record(
            OperationCf::ColorScale,
            &[ParamValue::Number(70.0), ParamValue::Number(70.0)],
            &f,
        ));

        let d = field_of(&["a", "a", "b", "c"]);
        assert_eq!(select_cells(OperationCf::IsDuplicate, &[], &d), vec![0, 1]);
        assert!(validate_record(OperationCf::IsDuplicate, &[], &d));
        assert!((record_coverage(OperationCf::IsDuplicate, &[], &d) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn map_roundtrips_through_json() {
        let map = IntentFocusMap::default();
        let json = map.to_json();
        let dir = std::env::temp_dir().join("tabsem_map_test.json");
        std::fs::write(&dir, serde_json::to_string_pretty(&json).unwrap()).unwrap();
        let loaded = IntentFocusMap::load(&dir).unwrap();
        assert_eq!(map, loaded);
        std::fs::remove_file(&dir).ok();
    }
}
