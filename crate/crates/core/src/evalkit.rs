//! Evaluation metrics: field-level recall at top-k for conditional
//! formatting, table-level recall/precision for charts, per-operation and
//! per-chart-type breakdowns, and semantics-task recall. Undefined
//! denominators surface as `None` ("n/a"), never as a silent zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::{param_order, ParamValue};
use crate::semantics::{ChartType, OperationCf, CHART_TYPES, OPERATIONS_CF};
use crate::{Error, Result};

/// Relative tolerance for numeric parameter matching.
pub const PARAM_REL_TOL: f64 = 1e-9;

/// How a predicted record must align with a gold record to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchPolicy {
    OperationOnly,
    ParametersOnly,
    Complete,
}

/// A ranked prediction or a gold record: operation plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfAnswer {
    pub operation: OperationCf,
    pub parameters: Vec<ParamValue>,
}

fn values_equal(a: &ParamValue, b: &ParamValue) -> bool {
    match (a, b) {
        (ParamValue::Number(x), ParamValue::Number(y)) => {
            (x - y).abs() <= PARAM_REL_TOL * x.abs().max(y.abs()).max(1.0)
        }
        (ParamValue::Text(x), ParamValue::Text(y)) => x == y,
        (ParamValue::Blank, ParamValue::Blank) => true,
        _ => false,
    }
}

/// Order-insensitive multiset equality over parameters.
pub fn params_match(a: &[ParamValue], b: &[ParamValue]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut sa: Vec<&ParamValue> = a.iter().collect();
    let mut sb: Vec<&ParamValue> = b.iter().collect();
    sa.sort_by(|x, y| param_order(x, y));
    sb.sort_by(|x, y| param_order(x, y));
    sa.iter().zip(sb.iter()).all(|(x, y)| values_equal(x, y))
}

/// Whether a prediction matches a gold record under the policy.
pub fn record_matches(pred: &CfAnswer, gold: &CfAnswer, policy: MatchPolicy) -> bool {
    match policy {
        MatchPolicy::OperationOnly => pred.operation == gold.operation,
        MatchPolicy::ParametersOnly => params_match(&pred.parameters, &gold.parameters),
        MatchPolicy::Complete => {
            pred.operation == gold.operation && params_match(&pred.parameters, &gold.parameters)
        }
    }
}

fn check_keys<K: Ord + std::fmt::Debug, A, B>(
    predictions: &BTreeMap<K, A>,
    gold: &BTreeMap<K, B>,
) -> Result<()> {
    if predictions.len() != gold.len() || !predictions.keys().eq(gold.keys()) {
        let missing: Vec<&K> = gold
            .keys()
            .filter(|k| !predictions.contains_key(k))
            .collect();
        let extra: Vec<&K> = predictions
            .keys()
            .filter(|k| !gold.contains_key(k))
            .collect();
        return Err(Error::KeyMismatch(format!(
            "missing {missing:?}, extra {extra:?}"
        )));
    }
    Ok(())
}

/// Fraction of fields where any of the top-k predictions matches any gold
/// record under the policy.
pub fn recall_at_k_cf<K: Ord + Clone + std::fmt::Debug>(
    predictions: &BTreeMap<K, Vec<CfAnswer>>,
    gold: &BTreeMap<K, Vec<CfAnswer>>,
    k: usize,
    policy: MatchPolicy,
) -> Result<f64> {
    check_keys(predictions, gold)?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut hit = 0usize;
    for (key, gold_records) in gold {
        let preds = &predictions[key];
        if preds
            .iter()
            .take(k)
            .any(|p| gold_records.iter().any(|g| record_matches(p, g, policy)))
        {
            hit += 1;
        }
    }
    Ok(hit as f64 / gold.len() as f64)
}

/// Recall at top-1 restricted to fields whose gold set contains the target
/// operation; `None` when no gold record uses it.
pub fn per_operation_recall<K: Ord + Clone + std::fmt::Debug>(
    predictions: &BTreeMap<K, Vec<CfAnswer>>,
    gold: &BTreeMap<K, Vec<CfAnswer>>,
    operation: OperationCf,
) -> Result<Option<f64>> {
    check_keys(predictions, gold)?;
    let mut denom = 0usize;
    let mut hit = 0usize;
    for (key, gold_records) in gold {
        let with_op: Vec<&CfAnswer> = gold_records
            .iter()
            .filter(|g| g.operation == operation)
            .collect();
        if with_op.is_empty() {
            continue;
        }
        denom += 1;
        if let Some(top1) = predictions[key].first() {
            if with_op
                .iter()
                .any(|g| record_matches(top1, g, MatchPolicy::Complete))
            {
                hit += 1;
            }
        }
    }
    if denom == 0 {
        Ok(None)
    } else {
        Ok(Some(hit as f64 / denom as f64))
    }
}

/// A chart prediction or gold record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartAnswer {
    pub chart_type: ChartType,
    pub x_fields: Vec<usize>,
    pub y_fields: Vec<usize>,
}

/// Which parts of a chart answer must match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartMatchPolicy {
    TypeOnly,
    AxesOnly,
    Complete,
}

fn set_eq(a: &[usize], b: &[usize]) -> bool {
    let sa: BTreeSet<usize> = a.iter().cloned().collect();
    let sb: BTreeSet<usize> = b.iter().cloned().collect();
    sa == sb
}

pub fn chart_matches(pred: &ChartAnswer, gold: &ChartAnswer, policy: ChartMatchPolicy) -> bool {
    let type_ok = pred.chart_type == gold.chart_type;
    let axes_ok = set_eq(&pred.x_fields, &gold.x_fields) && set_eq(&pred.y_fields, &gold.y_fields);
    match policy {
        ChartMatchPolicy::TypeOnly => type_ok,
        ChartMatchPolicy::AxesOnly => axes_ok,
        ChartMatchPolicy::Complete => type_ok && axes_ok,
    }
}

/// Fraction of tables where any top-k prediction matches any gold chart.
pub fn chart_recall_at_k(
    predictions: &BTreeMap<String, Vec<ChartAnswer>>,
    gold: &BTreeMap<String, Vec<ChartAnswer>>,
    k: usize,
    policy: ChartMatchPolicy,
) -> Result<f64> {
    check_keys(predictions, gold)?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut hit = 0usize;
    for (key, gold_records) in gold {
        if predictions[key]
            .iter()
            .take(k)
            .any(|p| gold_records.iter().any(|g| chart_matches(p, g, policy)))
        {
            hit += 1;
        }
    }
    Ok(hit as f64 / gold.len() as f64)
}

/// Per-chart-type recall and precision at top-1. The match is complete:
/// chart type plus both axis sets. Undefined denominators yield `None`.
pub fn chart_recall_precision(
    predictions: &BTreeMap<String, Vec<ChartAnswer>>,
    gold: &BTreeMap<String, Vec<ChartAnswer>>,
    chart_type: ChartType,
) -> Result<(Option<f64>, Option<f64>)> {
    check_keys(predictions, gold)?;
    let mut r_denom = 0usize;
    let mut r_hit = 0usize;
    let mut p_denom = 0usize;
    let mut p_hit = 0usize;
    for (key, gold_records) in gold {
        let gold_with_type: Vec<&ChartAnswer> = gold_records
            .iter()
            .filter(|g| g.chart_type == chart_type)
            .collect();
        let top1 = predictions[key].first();
        if !gold_with_type.is_empty() {
            r_denom += 1;
            if let Some(p) = top1 {
                if gold_with_type
                    .iter()
                    .any(|g| chart_matches(p, g, ChartMatchPolicy::Complete))
                {
                    r_hit += 1;
                }
            }
        }
        if let Some(p) = top1 {
            if p.chart_type == chart_type {
                p_denom += 1;
                if gold_records
                    .iter()
                    .any(|g| chart_matches(p, g, ChartMatchPolicy::Complete))
                {
                    p_hit += 1;
                }
            }
        }
    }
    let r = if r_denom == 0 {
        None
    } else {
        Some(r_hit as f64 / r_denom as f64)
    };
    let p = if p_denom == 0 {
        None
    } else {
        Some(p_hit as f64 / p_denom as f64)
    };
    Ok((r, p))
}

/// Predicted semantics scores for one field or table.
#[derive(Debug, Clone)]
pub struct PredictedSemantics {
    pub intent_scores: Vec<f64>,
    pub focus_scores: Vec<f64>,
}

/// Gold semantics: the intent index and the set of focus indices. For
/// charts (multiple gold intents) any listed intent counts.
#[derive(Debug, Clone)]
pub struct GoldSemantics {
    pub intents: BTreeSet<usize>,
    pub focuses: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemanticsRecall {
    pub overall: f64,
    pub intent: f64,
    pub focus: f64,
}

fn ranked_indices(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Semantics recall: intent at top-1, focus at top-k, and the complete
/// (intent, focus) pair at top-k under the product ranking.
pub fn semantics_recall<K: Ord + Clone + std::fmt::Debug>(
    predicted: &BTreeMap<K, PredictedSemantics>,
    gold: &BTreeMap<K, GoldSemantics>,
    k: usize,
) -> Result<SemanticsRecall> {
    check_keys(predicted, gold)?;
    if gold.is_empty() {
        return Ok(SemanticsRecall {
            overall: 0.0,
            intent: 0.0,
            focus: 0.0,
        });
    }
    let n = gold.len() as f64;
    let mut intent_hits = 0usize;
    let mut focus_hits = 0usize;
    let mut overall_hits = 0usize;
    for (key, g) in gold {
        let p = &predicted[key];
        let top_intent = ranked_indices(&p.intent_scores)[0];
        if g.intents.contains(&top_intent) {
            intent_hits += 1;
        }
        let focus_rank = ranked_indices(&p.focus_scores);
        if focus_rank.iter().take(k).any(|i| g.focuses.contains(i)) {
            focus_hits += 1;
        }

        // Pairs ranked by the product of the two scores.
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for (ui, us) in p.intent_scores.iter().enumerate() {
            for (di, ds) in p.focus_scores.iter().enumerate() {
                pairs.push((ui, di, us * ds));
            }
        }
        pairs.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        if pairs
            .iter()
            .take(k)
            .any(|(u, d, _)| g.intents.contains(u) && g.focuses.contains(d))
        {
            overall_hits += 1;
        }
    }
    Ok(SemanticsRecall {
        overall: overall_hits as f64 / n,
        intent: intent_hits as f64 / n,
        focus: focus_hits as f64 / n,
    })
}

// ---------------------------------------------------------------------------
// Aggregated reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CfMetrics {
    pub overall_r1: f64,
    pub overall_r3: f64,
    pub operation_r1: f64,
    pub operation_r3: f64,
    pub parameter_r1: f64,
    pub parameter_r3: f64,
    pub per_operation_r1: BTreeMap<String, Option<f64>>,
    pub n_fields: usize,
}

pub fn compute_cf_metrics<K: Ord + Clone + std::fmt::Debug>(
    predictions: &BTreeMap<K, Vec<CfAnswer>>,
    gold: &BTreeMap<K, Vec<CfAnswer>>,
) -> Result<CfMetrics> {
    let mut per_operation_r1 = BTreeMap::new();
    for op in OPERATIONS_CF {
        per_operation_r1.insert(
            op.name().to_string(),
            per_operation_recall(predictions, gold, op)?,
        );
    }
    Ok(CfMetrics {
        overall_r1: recall_at_k_cf(predictions, gold, 1, MatchPolicy::Complete)?,
        overall_r3: recall_at_k_cf(predictions, gold, 3, MatchPolicy::Complete)?,
        operation_r1: recall_at_k_cf(predictions, gold, 1, MatchPolicy::OperationOnly)?,
        operation_r3: recall_at_k_cf(predictions, gold, 3, MatchPolicy::OperationOnly)?,
        parameter_r1: recall_at_k_cf(predictions, gold, 1, MatchPolicy::ParametersOnly)?,
        parameter_r3: recall_at_k_cf(predictions, gold, 3, MatchPolicy::ParametersOnly)?,
        per_operation_r1,
        n_fields: gold.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TypeRecallPrecision {
    pub r_at_1: Option<f64>,
    pub p_at_1: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChartMetrics {
    pub overall_r1: f64,
    pub overall_r3: f64,
    pub type_r1: f64,
    pub axes_r1: f64,
    pub per_type: BTreeMap<String, TypeRecallPrecision>,
    pub n_tables: usize,
}

pub fn compute_chart_metrics(
    predictions: &BTreeMap<String, Vec<ChartAnswer>>,
    gold: &BTreeMap<String, Vec<ChartAnswer>>,
) -> Result<ChartMetrics> {
    let mut per_type = BTreeMap::new();
    for t in CHART_TYPES {
        let (r, p) = chart_recall_precision(predictions, gold, t)?;
        per_type.insert(
            t.name().to_string(),
            TypeRecallPrecision {
                r_at_1: r,
                p_at_1: p,
            },
        );
    }
    Ok(ChartMetrics {
        overall_r1: chart_recall_at_k(predictions, gold, 1, ChartMatchPolicy::Complete)?,
        overall_r3: chart_recall_at_k(predictions, gold, 3, ChartMatchPolicy::Complete)?,
        type_r1: chart_recall_at_k(predictions, gold, 1, ChartMatchPolicy::TypeOnly)?,
        axes_r1: chart_recall_at_k(predictions, gold, 1, ChartMatchPolicy::AxesOnly)?,
        per_type,
        n_tables: gold.len(),
    })
}

fn fmt_opt(v: &Option<f64>) -> String {
    match v {
        Some(x) => format!("{:6.2}", 100.0 * x),
        None => "   n/a".to_string(),
    }
}

/// Plain-text rendering of the metric tables.
pub fn render_text_report(
    cf: Option<&CfMetrics>,
    chart: Option<&ChartMetrics>,
    semantics_cf: Option<&SemanticsRecall>,
    semantics_chart: Option<&SemanticsRecall>,
) -> String {
    let mut out = String::new();
    if let Some(m) = cf {
        out.push_str("Conditional Formatting            R@1     R@3\n");
        out.push_str(&format!(
            "  Overall (CF)                 {:6.2}  {:6.2}\n",
            100.0 * m.overall_r1,
            100.0 * m.overall_r3
        ));
        out.push_str(&format!(
            "  Operation (O_CF)             {:6.2}  {:6.2}\n",
            100.0 * m.operation_r1,
            100.0 * m.operation_r3
        ));
        out.push_str(&format!(
            "  Parameter (R_CF)             {:6.2}  {:6.2}\n",
            100.0 * m.parameter_r1,
            100.0 * m.parameter_r3
        ));
        out.push_str("  Per-operation R@1:\n");
        for (name, v) in &m.per_operation_r1 {
            out.push_str(&format!("    {name:<26} {}\n", fmt_opt(v)));
        }
    }
    if let Some(m) = chart {
        out.push_str("\nChart                             R@1\n");
        out.push_str(&format!(
            "  Overall (Chart)              {:6.2}\n",
            100.0 * m.overall_r1
        ));
        out.push_str(&format!(
            "  Chart Type (O_Chart)         {:6.2}\n",
            100.0 * m.type_r1
        ));
        out.push_str(&format!(
            "  X/Y-Axis (R_Chart)           {:6.2}\n",
            100.0 * m.axes_r1
        ));
        out.push_str("  Per-type R@1 / P@1:\n");
        for (name, v) in &m.per_type {
            out.push_str(&format!(
                "    {name:<26} {}  {}\n",
                fmt_opt(&v.r_at_1),
                fmt_opt(&v.p_at_1)
            ));
        }
    }
    if let Some(s) = semantics_cf {
        out.push_str("\nSemantics (CF)                    R@1\n");
        out.push_str(&format!(
            "  Overall (AS)                 {:6.2}\n",
            100.0 * s.overall
        ));
        out.push_str(&format!(
            "  User Intent (U)              {:6.2}\n",
            100.0 * s.intent
        ));
        out.push_str(&format!(
            "  Data Focus (D)               {:6.2}\n",
            100.0 * s.focus
        ));
    }
    if let Some(s) = semantics_chart {
        out.push_str("\nSemantics (Chart)                 R@1\n");
        out.push_str(&format!(
            "  Overall (AS)                 {:6.2}\n",
            100.0 * s.overall
        ));
        out.push_str(&format!(
            "  User Intent (U)              {:6.2}\n",
            100.0 * s.intent
        ));
        out.push_str(&format!(
            "  Data Focus (D)               {:6.2}\n",
            100.0 * s.focus
        ));
    }
    out
}
