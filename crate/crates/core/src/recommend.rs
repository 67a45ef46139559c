//! End-to-end ranked recommendation: decode the semantics heads, prune the
//! operation and parameter spaces through the intent/focus map, score
//! candidate records as products of head probabilities, and keep only
//! executable results.

use std::cmp::Ordering;

use serde::Serialize;

use crate::corpus::{param_order, ParamValue};
use crate::model::{forward_chart, sigmoid, CfLogits, Featurizer, TrainedModel};
use crate::semantics::{
    candidate_operations, candidate_parameters_for_focus, filter_operation_scores, validate_record,
    CfSemantics, ChartFocus, ChartIntent, ChartType, DataFocusCf, IntentFocusMap, OperationCf,
    ParamCandidate, Provenance, UserIntentCf, CHART_FOCUSES, CHART_INTENTS, CHART_TYPES,
    DATA_FOCUSES_CF, OPERATIONS_CF,
};
use crate::signatures::{compute_cell_signatures, CellSignature};
use crate::table::{Field, FieldType, Table};
use crate::{Error, Result};

/// Undo the class-frequency loss reweighting when reading a probability
/// off a head: training with positive weight p drives the sigmoid towards
/// p*q / (p*q + 1 - q), so the calibrated probability is
/// sigma / (sigma + p * (1 - sigma)). Identity at p = 1.
pub fn calibrate(sigma: f64, pos_weight: f64) -> f64 {
    let p = pos_weight.max(1e-12);
    sigma / (sigma + p * (1.0 - sigma))
}

/// One recommended parameter with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecommendedParam {
    pub value: ParamValue,
    pub provenance: Provenance,
}

/// A ranked conditional-formatting recommendation for one field.
#[derive(Debug, Clone, Serialize)]
pub struct CfRecommendation {
    pub operation: OperationCf,
    pub parameters: Vec<RecommendedParam>,
    pub score: f64,
    pub semantics: Option<CfSemantics>,
    pub explanation: String,
}

/// A ranked chart recommendation for one table.
#[derive(Debug, Clone, Serialize)]
pub struct ChartRecommendation {
    pub chart_type: ChartType,
    pub x_fields: Vec<usize>,
    pub y_fields: Vec<usize>,
    pub score: f64,
    pub intents: Vec<ChartIntent>,
    pub focuses: Vec<ChartFocus>,
    pub explanation: String,
}

/// Decoded semantics plus per-head probabilities.
#[derive(Debug, Clone)]
pub struct DecodedCf {
    pub intent: UserIntentCf,
    pub intent_probs: Vec<f64>,
    /// Focuses over the decode threshold, ordered by descending probability.
    pub focuses: Vec<DataFocusCf>,
    pub focus_probs: Vec<f64>,
    pub operation_probs: Vec<f64>,
    /// Reference probability per sampled cell.
    pub reference_probs: Vec<f64>,
}

/// Decode the conditional-formatting heads: argmax intent, focuses over the
/// 0.5 threshold (argmax fallback), type-invalid focuses masked out.
/// Operation and reference probabilities are calibrated against the
/// training-split class weights so scores are comparable across classes.
pub fn decode_cf(logits: &CfLogits, ftype: FieldType, pos: &crate::model::PosWeights) -> DecodedCf {
    let intent_probs: Vec<f64> = logits.intent.iter().map(|x| sigmoid(*x)).collect();
    let intent = if intent_probs[UserIntentCf::Compare.index()]
        > intent_probs[UserIntentCf::Detect.index()]
    {
        UserIntentCf::Compare
    } else {
        UserIntentCf::Detect
    };
    let focus_probs: Vec<f64> = logits.focus.iter().map(|x| sigmoid(*x)).collect();
    let mut focuses: Vec<(DataFocusCf, f64)> = DATA_FOCUSES_CF
        .into_iter()
        .filter(|f| f.valid_for(ftype))
        .map(|f| (f, focus_probs[f.index()]))
        .filter(|(_, p)| *p > 0.5)
        .collect();
    if focuses.is_empty() {
        let best = DATA_FOCUSES_CF
            .into_iter()
            .filter(|f| f.valid_for(ftype))
            .max_by(|a, b| {
                focus_probs[a.index()]
                    .partial_cmp(&focus_probs[b.index()])
                    .unwrap_or(Ordering::Equal)
                    .then(b.index().cmp(&a.index()))
            });
        if let Some(f) = best {
            focuses.push((f, focus_probs[f.index()]));
        }
    }
    focuses.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.index().cmp(&b.0.index()))
    });
    DecodedCf {
        intent,
        intent_probs,
        focuses: focuses.into_iter().map(|(f, _)| f).collect(),
        focus_probs,
        operation_probs: logits
            .operation
            .iter()
            .enumerate()
            .map(|(i, x)| calibrate(sigmoid(*x), pos.operation[i]))
            .collect(),
        reference_probs: logits
            .reference
            .iter()
            .map(|x| calibrate(sigmoid(*x), pos.reference))
            .collect(),
    }
}

/// A scored candidate value shared by the pipeline and the exhaustive
/// reference: the score is the best reference probability over supporting
/// sampled cells, 0.5 (a neutral prior) for derived statistics without one.
#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub value: ParamValue,
    pub provenance: Provenance,
    pub score: f64,
    /// Top/bottom-k count this candidate stands for, when rank-derived.
    pub top_k: Option<usize>,
}

fn param_matches(p: &ParamValue, cell: &crate::table::Cell) -> bool {
    match (p, &cell.kind) {
        (ParamValue::Number(v), crate::table::CellKind::Number(x)) => {
            (v - x).abs() <= 1e-9 * v.abs().max(1.0)
        }
        (
            ParamValue::Text(t),
            crate::table::CellKind::Text
            | crate::table::CellKind::Error
            | crate::table::CellKind::Date(_),
        ) => cell.raw.trim() == t,
        (ParamValue::Blank, crate::table::CellKind::Blank) => true,
        _ => false,
    }
}

/// Score one candidate against the sampled cells' reference probabilities.
fn score_candidate(
    cand: &ParamCandidate,
    field: &Field,
    sigs: &[CellSignature],
    sampled: &[usize],
    ref_probs: &[f64],
) -> ScoredCandidate {
    let mut best: Option<f64> = None;
    let mut top_k = None;
    match &cand.provenance {
        Provenance::TopK => {
            if let ParamValue::Number(k) = cand.value {
                let k = k.round() as usize;
                top_k = Some(k);
                for (j, &i) in sampled.iter().enumerate() {
                    if sigs[i].desc_rank == k || sigs[i].asc_rank == k {
                        best = Some(best.unwrap_or(0.0).max(ref_probs[j]));
                    }
                }
            }
        }
        Provenance::BlankSentinel => {
            for (j, &i) in sampled.iter().enumerate() {
                if sigs[i].is_blank {
                    best = Some(best.unwrap_or(0.0).max(ref_probs[j]));
                }
            }
        }
        _ => {
            for (j, &i) in sampled.iter().enumerate() {
                if param_matches(&cand.value, &field.cells[i]) {
                    best = Some(best.unwrap_or(0.0).max(ref_probs[j]));
                }
            }
        }
    }
    ScoredCandidate {
        value: cand.value.clone(),
        provenance: cand.provenance.clone(),
        score: best.unwrap_or(0.5),
        top_k,
    }
}

/// Candidate pool for one operation under the decoded semantics: the union
/// of the contributing focuses' candidates, deduplicated by value.
#[allow(clippy::too_many_arguments)]
pub fn candidate_pool(
    op: OperationCf,
    intent: UserIntentCf,
    focuses: &[DataFocusCf],
    map: &IntentFocusMap,
    prune: bool,
    field: &Field,
    sigs: &[CellSignature],
    sampled: &[usize],
    ref_probs: &[f64],
    vocab: &crate::signatures::Vocabulary,
) -> Result<Vec<ScoredCandidate>> {
    let mut contributing: Vec<DataFocusCf> = Vec::new();
    if prune {
        for f in focuses {
            if map.get(intent, *f)?.contains(&op) && !contributing.contains(f) {
                contributing.push(*f);
            }
        }
    } else {
        contributing = DATA_FOCUSES_CF
            .into_iter()
            .filter(|f| f.valid_for(field.ftype))
            .collect();
    }
    let mut out: Vec<ScoredCandidate> = Vec::new();
    for f in contributing {
        for cand in candidate_parameters_for_focus(field, sigs, f, vocab)? {
            if !out.iter().any(|c| c.value == cand.value) {
                out.push(score_candidate(&cand, field, sigs, sampled, ref_probs));
            }
        }
    }
    Ok(out)
}

/// Total order on recommendations: score descending, then operation order,
/// then parameter values ascending.
pub fn compare_recommendations(a: &CfRecommendation, b: &CfRecommendation) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.operation.index().cmp(&b.operation.index()))
        .then_with(|| {
            for (x, y) in a.parameters.iter().zip(&b.parameters) {
                let ord = param_order(&x.value, &y.value);
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            a.parameters.len().cmp(&b.parameters.len())
        })
}

/// Filter the candidate pool to the values an operation can take.
fn usable_for(op: OperationCf, c: &ScoredCandidate) -> bool {
    match op {
        OperationCf::IsError => {
            matches!(c.provenance, Provenance::Cell { .. })
                && matches!(c.value, ParamValue::Text(_))
        }
        OperationCf::IsBlank => matches!(c.provenance, Provenance::BlankSentinel),
        OperationCf::IsDuplicate => false, // parameterless
        OperationCf::TopBottomK => c.top_k.is_some(),
        OperationCf::LessGreaterThan
        | OperationCf::Between
        | OperationCf::DataBar
        | OperationCf::ColorScale
        | OperationCf::IconSet
        | OperationCf::PartitionSet => {
            c.top_k.is_none() && matches!(c.value, ParamValue::Number(_))
        }
        OperationCf::EqualContains | OperationCf::EqualSet => {
            c.top_k.is_none()
                && !matches!(
                    c.provenance,
                    Provenance::BlankSentinel | Provenance::Duplicate
                )
                && !matches!(c.value, ParamValue::Blank)
        }
    }
}

/// Materialize up to `limit` best executable parameter combinations for one
/// operation, each scored as the product of its parameter scores.
fn materialize_op(
    op: OperationCf,
    op_prob: f64,
    pool: &[ScoredCandidate],
    field: &Field,
    multi: usize,
    limit: usize,
) -> Vec<(Vec<RecommendedParam>, f64)> {
    let m = op.param_count(multi);
    if op == OperationCf::IsDuplicate {
        // Needs duplicates to exist (the duplicate marker candidate).
        let has_dups = pool
            .iter()
            .any(|c| matches!(c.provenance, Provenance::Duplicate));
        if has_dups && validate_record(op, &[], field) {
            return vec![(Vec::new(), op_prob)];
        }
        return Vec::new();
    }
    let usable: Vec<&ScoredCandidate> = pool.iter().filter(|c| usable_for(op, c)).collect();
    if usable.len() < m {
        return Vec::new();
    }

    // Enumerate arity-sized combinations, rank by product score with the
    // deterministic tie-break, and keep the first `limit` executable ones.
    let mut combos: Vec<(Vec<&ScoredCandidate>, f64)> = Vec::new();
    match m {
        1 => {
            for c in &usable {
                combos.push((vec![c], c.score));
            }
        }
        2 => {
            for i in 0..usable.len() {
                for j in i + 1..usable.len() {
                    combos.push((
                        vec![usable[i], usable[j]],
                        usable[i].score * usable[j].score,
                    ));
                }
            }
        }
        _ => {
            // 3..=4 parameters: index-set enumeration.
            let n = usable.len();
            let mut idx: Vec<usize> = (0..m).collect();
            loop {
                let combo: Vec<&ScoredCandidate> = idx.iter().map(|&i| usable[i]).collect();
                let score = combo.iter().map(|c| c.score).product();
                combos.push((combo, score));
                // Next combination in lexicographic index order.
                let mut i = m;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    if idx[i] != i + n - m {
                        idx[i] += 1;
                        for j in i + 1..m {
                            idx[j] = idx[j - 1] + 1;
                        }
                        break;
                    }
                    if i == 0 {
                        idx = Vec::new();
                        break;
                    }
                }
                if idx.is_empty() {
                    break;
                }
            }
        }
    }

    let sorted_values = |combo: &[&ScoredCandidate]| -> Vec<ParamValue> {
        let mut v: Vec<ParamValue> = combo.iter().map(|c| c.value.clone()).collect();
        v.sort_by(param_order);
        v
    };
    combos.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                let va = sorted_values(&a.0);
                let vb = sorted_values(&b.0);
                for (x, y) in va.iter().zip(vb.iter()) {
                    let ord = param_order(x, y);
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                Ordering::Equal
            })
    });

    let mut out = Vec::new();
    for (combo, score) in combos {
        let mut params: Vec<RecommendedParam> = combo
            .iter()
            .map(|c| RecommendedParam {
                value: c.value.clone(),
                provenance: c.provenance.clone(),
            })
            .collect();
        params.sort_by(|a, b| param_order(&a.value, &b.value));
        let values: Vec<ParamValue> = params.iter().map(|p| p.value.clone()).collect();
        if !validate_record(op, &values, field) {
            continue;
        }
        out.push((params, op_prob * score));
        if out.len() >= limit {
            break;
        }
    }
    out
}

/// Top-k conditional-formatting recommendations for one field.
pub fn recommend_cf(
    model: &TrainedModel,
    featurizer: &Featurizer,
    table: &Table,
    field_index: usize,
    k: usize,
    map: &IntentFocusMap,
) -> Result<Vec<CfRecommendation>> {
    let mode = model.cf_model()?;
    let field = table.field(field_index)?;
    let input = featurizer.field_input(table, field_index)?;
    let logits = crate::model::forward_cf(&mode.params, featurizer, table, field_index)?;
    let sigs = compute_cell_signatures(field, featurizer.vocab);
    let decoded = decode_cf(&logits, field.ftype, &mode.pos_weights);
    let prune = !model.ablation.no_semantics;

    let (intent, focuses) = (decoded.intent, decoded.focuses.clone());
    let allowed = if prune {
        candidate_operations(intent, &focuses, map)?
    } else {
        OPERATIONS_CF.to_vec()
    };
    let filtered = filter_operation_scores(&decoded.operation_probs, &allowed);

    let semantics = prune.then(|| CfSemantics {
        intent,
        focuses: focuses.clone(),
    });
    let mut recs: Vec<CfRecommendation> = Vec::new();
    for op in &allowed {
        let op_prob = filtered[op.index()];
        if !op_prob.is_finite() {
            continue;
        }
        let pool = candidate_pool(
            *op,
            intent,
            &focuses,
            map,
            prune,
            field,
            &sigs,
            &input.sampled,
            &decoded.reference_probs,
            featurizer.vocab,
        )?;
        for (params, score) in materialize_op(
            *op,
            op_prob,
            &pool,
            field,
            featurizer_multi(featurizer, model),
            k.max(1),
        ) {
            let explanation = explain_cf(*op, &params, semantics.as_ref());
            recs.push(CfRecommendation {
                operation: *op,
                parameters: params,
                score,
                semantics: semantics.clone(),
                explanation,
            });
        }
    }
    recs.sort_by(compare_recommendations);
    recs.truncate(k);
    Ok(recs)
}

fn featurizer_multi(_featurizer: &Featurizer, model: &TrainedModel) -> usize {
    model.config.multi_param_count
}

/// Top-k chart recommendations for one table.
pub fn recommend_chart(
    model: &TrainedModel,
    featurizer: &Featurizer,
    table: &Table,
    k: usize,
) -> Result<Vec<ChartRecommendation>> {
    let mode = model.chart_model()?;
    if table.fields.is_empty() {
        return Err(Error::EmptyTable);
    }
    let numeric: Vec<usize> = table
        .fields
        .iter()
        .filter(|f| f.ftype == FieldType::Numeric)
        .map(|f| f.index)
        .collect();
    if numeric.is_empty() {
        return Err(Error::NoNumericField);
    }
    let logits = forward_chart(&mode.params, featurizer, table)?;

    let pos = &mode.pos_weights;
    let type_probs: Vec<f64> = logits
        .chart_type
        .iter()
        .enumerate()
        .map(|(i, x)| calibrate(sigmoid(*x), pos.operation[i]))
        .collect();
    let x_probs: Vec<f64> = logits
        .axis
        .iter()
        .map(|a| calibrate(sigmoid(a[0]), pos.reference))
        .collect();
    // The 0.5 decode threshold applies to the raw sigmoid; scores use the
    // calibrated probabilities.
    let y_sigmoids: Vec<f64> = logits.axis.iter().map(|a| sigmoid(a[1])).collect();
    let y_probs: Vec<f64> = logits
        .axis
        .iter()
        .map(|a| calibrate(sigmoid(a[1]), pos.reference))
        .collect();

    // Decoded semantics for the explanation.
    let intent_probs: Vec<f64> = logits.intent.iter().map(|x| sigmoid(*x)).collect();
    let mut intents: Vec<ChartIntent> = CHART_INTENTS
        .into_iter()
        .filter(|i| intent_probs[i.index()] > 0.5)
        .collect();
    if intents.is_empty() {
        let best = CHART_INTENTS
            .into_iter()
            .max_by(|a, b| {
                intent_probs[a.index()]
                    .partial_cmp(&intent_probs[b.index()])
                    .unwrap_or(Ordering::Equal)
                    .then(b.index().cmp(&a.index()))
            })
            .expect("non-empty");
        intents.push(best);
    }
    intents.sort_by(|a, b| {
        intent_probs[b.index()]
            .partial_cmp(&intent_probs[a.index()])
            .unwrap_or(Ordering::Equal)
            .then(a.index().cmp(&b.index()))
    });
    let focus_probs: Vec<f64> = logits.focus.iter().map(|x| sigmoid(*x)).collect();
    let focuses: Vec<ChartFocus> = CHART_FOCUSES
        .into_iter()
        .filter(|f| focus_probs[f.index()] > 0.5)
        .collect();

    let mut types: Vec<ChartType> = CHART_TYPES.to_vec();
    types.sort_by(|a, b| {
        type_probs[b.index()]
            .partial_cmp(&type_probs[a.index()])
            .unwrap_or(Ordering::Equal)
            .then(a.index().cmp(&b.index()))
    });

    let mut recs = Vec::new();
    for chart_type in types {
        let x_field = match chart_type.x_restriction() {
            None => None,
            Some(req) => {
                let eligible: Vec<usize> = table
                    .fields
                    .iter()
                    .filter(|f| f.ftype == req)
                    .map(|f| f.index)
                    .collect();
                match eligible.iter().max_by(|&&a, &&b| {
                    x_probs[a]
                        .partial_cmp(&x_probs[b])
                        .unwrap_or(Ordering::Equal)
                        .then(b.cmp(&a))
                }) {
                    Some(&x) => Some(x),
                    None => continue, // no field satisfies the type restriction
                }
            }
        };
        let y_candidates: Vec<usize> = numeric
            .iter()
            .cloned()
            .filter(|i| Some(*i) != x_field)
            .collect();
        if y_candidates.is_empty() {
            continue;
        }
        let mut y_fields: Vec<usize> = y_candidates
            .iter()
            .cloned()
            .filter(|&i| y_sigmoids[i] > 0.5)
            .collect();
        if y_fields.is_empty() {
            let best = y_candidates
                .iter()
                .cloned()
                .max_by(|&a, &b| {
                    y_probs[a]
                        .partial_cmp(&y_probs[b])
                        .unwrap_or(Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .expect("non-empty");
            y_fields.push(best);
        }
        y_fields.sort_unstable();

        let mut score = type_probs[chart_type.index()];
        if let Some(x) = x_field {
            score *= x_probs[x];
        }
        score *= y_fields.iter().map(|&i| y_probs[i]).sum::<f64>() / y_fields.len() as f64;

        let x_fields: Vec<usize> = x_field.into_iter().collect();
        let explanation = explain_chart(chart_type, &x_fields, &y_fields, &intents, table);
        recs.push(ChartRecommendation {
            chart_type,
            x_fields,
            y_fields,
            score,
            intents: intents.clone(),
            focuses: focuses.clone(),
            explanation,
        });
    }
    recs.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.chart_type.index().cmp(&b.chart_type.index()))
    });
    recs.truncate(k);
    Ok(recs)
}

// ---------------------------------------------------------------------------
// Explanations
// ---------------------------------------------------------------------------

fn op_action(op: OperationCf, params: &[RecommendedParam]) -> String {
    let val = |i: usize| params.get(i).map(|p| p.value.display()).unwrap_or_default();
    match op {
        OperationCf::IsError => "highlight the error cells".to_string(),
        OperationCf::IsBlank => "highlight the blank cells".to_string(),
        OperationCf::IsDuplicate => "highlight duplicated values".to_string(),
        OperationCf::LessGreaterThan => {
            format!("split the cells against the threshold {}", val(0))
        }
        OperationCf::TopBottomK => format!("highlight the top {} records", val(0)),
        OperationCf::Between => format!("mark values between {} and {}", val(0), val(1)),
        OperationCf::EqualContains => format!("highlight cells equal to {}", val(0)),
        OperationCf::EqualSet => {
            let vals: Vec<String> = params.iter().map(|p| p.value.display()).collect();
            format!("mark each of {} with its own format", vals.join(", "))
        }
        OperationCf::DataBar => {
            format!(
                "draw data bars over the buckets split at {} and {}",
                val(0),
                val(1)
            )
        }
        OperationCf::ColorScale => {
            format!(
                "apply a color scale over the buckets split at {} and {}",
                val(0),
                val(1)
            )
        }
        OperationCf::IconSet => {
            format!(
                "assign icons over the buckets split at {} and {}",
                val(0),
                val(1)
            )
        }
        OperationCf::PartitionSet => {
            format!("partition the cells at {} and {}", val(0), val(1))
        }
    }
}

/// One-sentence template per (intent, focus) pair, instantiated with the
/// operation and its parameters.
pub fn explain_cf(
    op: OperationCf,
    params: &[RecommendedParam],
    semantics: Option<&CfSemantics>,
) -> String {
    let action = op_action(op, params);
    let Some(sem) = semantics else {
        return format!("Recommended formatting: {action}.");
    };
    let intent_word = match sem.intent {
        UserIntentCf::Detect => "Detect",
        UserIntentCf::Compare => "Compare",
    };
    let focus_phrase = match sem.focuses.first() {
        Some(DataFocusCf::Error) => "error values",
        Some(DataFocusCf::Blank) => "blank values",
        Some(DataFocusCf::Meaningful) => "meaningful values",
        Some(DataFocusCf::Empirical) => "empirical split points",
        Some(DataFocusCf::RankAware) => "rank-aware values",
        Some(DataFocusCf::RangeAware) => "range-aware values",
        Some(DataFocusCf::Frequency) => "frequency-aware values",
        None => "salient values",
    };
    format!("{intent_word} {focus_phrase}: {action} of this field.")
}

fn explain_chart(
    chart_type: ChartType,
    x_fields: &[usize],
    y_fields: &[usize],
    intents: &[ChartIntent],
    table: &Table,
) -> String {
    let name = |i: &usize| table.fields[*i].header.clone();
    let ys: Vec<String> = y_fields.iter().map(name).collect();
    let ys = ys.join(", ");
    let type_name = match chart_type {
        ChartType::Bar => "bar chart",
        ChartType::Line => "line chart",
        ChartType::Scatter => "scatter chart",
        ChartType::Pie => "pie chart",
    };
    match intents.first() {
        Some(ChartIntent::TimeTrend) => {
            let x = x_fields.first().map(&name).unwrap_or_default();
            format!("Show the time-evolving trend of {ys} over {x} with a {type_name}.")
        }
        Some(ChartIntent::Composition) => {
            format!("Show the part-to-whole composition of {ys} with a {type_name}.")
        }
        Some(ChartIntent::Relationship) => {
            let x = x_fields.first().map(&name).unwrap_or_default();
            format!("Show the relationship between {x} and {ys} with a {type_name}.")
        }
        _ => {
            let x = x_fields.first().map(name).unwrap_or_default();
            format!("Compare {ys} across {x} with a {type_name}.")
        }
    }
}

/// Human-readable explanation of a recommendation.
pub fn explain(rec: &CfRecommendation) -> String {
    rec.explanation.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthSpec};
    use crate::embed::HashedNGramEmbedder;
    use crate::model::train::{train, TrainedModel};
    use crate::model::ModelConfig;
    use crate::signatures::Vocabulary;
    use crate::table::parse_table;

    fn tiny_model(corpus_tables: usize, epochs: usize) -> (TrainedModel, Vocabulary) {
        let spec = SynthSpec {
            n_tables: corpus_tables,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(16, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let config = ModelConfig {
            encoder_dim: 16,
            layers: 1,
            heads: 2,
            embed_dim: 16,
            max_epochs: epochs,
            ..ModelConfig::default()
        };
        (
            train(&corpus.tables, &corpus.records, &config, &fz).unwrap(),
            vocab,
        )
    }

    #[test]
    fn topk_contract_and_sorting() {
        let (model, vocab) = tiny_model(30, 1);
        let provider = HashedNGramEmbedder::new(16, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let rows = vec![
            vec!["score".to_string()],
            vec!["60".to_string()],
            vec!["70".to_string()],
            vec!["80".to_string()],
            vec!["94".to_string()],
        ];
        let t = parse_table(&rows, true, "t").unwrap();
        let map = IntentFocusMap::default();
        let recs = recommend_cf(&model, &fz, &t, 0, 3, &map).unwrap();
        assert!(recs.len() <= 3);
        for w in recs.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        for r in &recs {
            assert!(r.score > 0.0 && r.score <= 1.0);
            assert!(r.operation.arity_ok(r.parameters.len()));
            // Pruning soundness: the emitted operation is reachable from the
            // decoded semantics.
            let sem = r.semantics.as_ref().unwrap();
            let allowed = candidate_operations(sem.intent, &sem.focuses, &map).unwrap();
            assert!(allowed.contains(&r.operation));
        }
    }

    #[test]
    fn emitted_records_are_executable() {
        let (model, vocab) = tiny_model(40, 2);
        let provider = HashedNGramEmbedder::new(16, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let spec = SynthSpec {
            n_tables: 10,
            seed: 99,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let map = IntentFocusMap::default();
        for doc in &corpus.tables {
            let table = doc.to_table().unwrap();
            for fi in 0..table.fields.len() {
                let recs = recommend_cf(&model, &fz, &table, fi, 3, &map).unwrap();
                for r in recs {
                    let values: Vec<ParamValue> =
                        r.parameters.iter().map(|p| p.value.clone()).collect();
                    assert!(
                        validate_record(r.operation, &values, &table.fields[fi]),
                        "unexecutable {:?} {:?}",
                        r.operation,
                        values
                    );
                }
            }
        }
    }

    #[test]
    fn chart_constraints() {
        let (model, vocab) = tiny_model(40, 2);
        let provider = HashedNGramEmbedder::new(16, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let rows = vec![
            vec!["date".to_string(), "sales_total".to_string()],
            vec!["2021-01-01".to_string(), "5".to_string()],
            vec!["2021-02-01".to_string(), "8".to_string()],
            vec!["2021-03-01".to_string(), "6".to_string()],
            vec!["2021-04-01".to_string(), "9".to_string()],
            vec!["2021-05-01".to_string(), "7".to_string()],
            vec!["2021-06-01".to_string(), "4".to_string()],
        ];
        let t = parse_table(&rows, true, "t").unwrap();
        let recs = recommend_chart(&model, &fz, &t, 4).unwrap();
        assert!(!recs.is_empty());
        for r in &recs {
            match r.chart_type {
                ChartType::Pie => assert!(r.x_fields.is_empty()),
                other => {
                    assert_eq!(r.x_fields.len(), 1);
                    let req = other.x_restriction().unwrap();
                    assert_eq!(t.fields[r.x_fields[0]].ftype, req);
                }
            }
            assert!(!r.y_fields.is_empty());
        }
        // k=1 returns exactly one result on a non-degenerate table.
        let one = recommend_chart(&model, &fz, &t, 1).unwrap();
        assert_eq!(one.len(), 1);

        // Text-only tables cannot host a numeric y-axis.
        let rows = vec![
            vec!["a".to_string()],
            vec!["x".to_string()],
            vec!["y".to_string()],
        ];
        let t = parse_table(&rows, true, "t").unwrap();
        assert!(matches!(
            recommend_chart(&model, &fz, &t, 1),
            Err(Error::NoNumericField)
        ));
    }

    #[test]
    fn explanations_mention_key_facts() {
        let sem = CfSemantics {
            intent: UserIntentCf::Detect,
            focuses: vec![DataFocusCf::RankAware],
        };
        let params = vec![RecommendedParam {
            value: ParamValue::Number(3.0),
            provenance: Provenance::TopK,
        }];
        let text = explain_cf(OperationCf::TopBottomK, &params, Some(&sem));
        assert!(text.contains("top 3"), "{text}");
        assert!(text.contains("rank-aware"), "{text}");

        let sem = CfSemantics {
            intent: UserIntentCf::Detect,
            focuses: vec![DataFocusCf::Error],
        };
        let text = explain_cf(OperationCf::IsError, &[], Some(&sem));
        assert!(text.contains("error"), "{text}");

        // Every intent/focus pair instantiates without panicking.
        use crate::semantics::USER_INTENTS_CF;
        for intent in USER_INTENTS_CF {
            for focus in DATA_FOCUSES_CF {
                let sem = CfSemantics {
                    intent,
                    focuses: vec![focus],
                };
                let text = explain_cf(OperationCf::EqualContains, &[], Some(&sem));
                assert!(!text.is_empty());
            }
        }
    }

    #[test]
    fn untrained_model_is_rejected() {
        let (mut model, vocab) = tiny_model(25, 1);
        model.cf = None;
        let provider = HashedNGramEmbedder::new(16, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let rows = vec![vec!["a".to_string()], vec!["1".to_string()]];
        let t = parse_table(&rows, true, "t").unwrap();
        let map = IntentFocusMap::default();
        assert!(matches!(
            recommend_cf(&model, &fz, &t, 0, 1, &map),
            Err(Error::UntrainedModel)
        ));
    }
}
