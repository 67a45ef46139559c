//! Example construction from a corpus, table-id splitting, the Adam
//! optimizer, the training loop with early stopping, and model file I/O.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nn::ParamVisit;
use super::{
    cf_backward, chart_backward, AblationFlags, CfGradScale, CfLabels, ChartLabels, Featurizer,
    LossBreakdown, LossWeights, ModelConfig, ModelParameters, PosWeights, CF_HEADS, CHART_HEADS,
};
use crate::corpus::{AnalysisRecord, TableDoc};
use crate::semantics::{
    label_focus_cf, label_intent_cf, label_semantics_chart, reference_cells, ChartType,
    CHART_FOCUSES, CHART_INTENTS, CHART_TYPES, DATA_FOCUSES_CF, OPERATIONS_CF,
};
use crate::signatures::{compute_cell_signatures, compute_field_signatures};
use crate::table::Table;
use crate::{Error, Result};

/// One featurized, labeled conditional-formatting example (one field).
#[derive(Debug, Clone)]
pub struct CfExample {
    pub table_id: String,
    pub field_index: usize,
    pub input: super::FieldInput,
    pub labels: CfLabels,
}

/// One featurized, labeled chart example (one table).
#[derive(Debug, Clone)]
pub struct ChartExample {
    pub table_id: String,
    pub input: super::TableInput,
    pub labels: ChartLabels,
}

/// Deterministic 70/10/20 split over table ids (floor fractions, remainder
/// to the test split), shuffled by the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

pub fn split_table_ids(ids: &[String], seed: u64) -> SplitIds {
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let n = sorted.len();
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    SplitIds {
        train: sorted[..n_train].to_vec(),
        val: sorted[n_train..n_train + n_val].to_vec(),
        test: sorted[n_train + n_val..].to_vec(),
    }
}

impl SplitIds {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Parse every table doc once, keyed by id.
pub fn parse_tables(docs: &[TableDoc]) -> Result<BTreeMap<String, Table>> {
    docs.iter()
        .map(|d| Ok((d.id.clone(), d.to_table()?)))
        .collect()
}

/// Build labeled conditional-formatting examples: one per (table, field)
/// carrying records, with rule-derived intent/focus labels, multi-hot
/// operations and per-sampled-cell reference labels.
pub fn build_cf_examples(
    tables: &BTreeMap<String, Table>,
    records: &[AnalysisRecord],
    featurizer: &Featurizer,
) -> Result<Vec<CfExample>> {
    let mut by_field: BTreeMap<(String, usize), Vec<&AnalysisRecord>> = BTreeMap::new();
    for r in records {
        if let AnalysisRecord::Cf {
            table_id,
            field_index,
            ..
        } = r
        {
            by_field
                .entry((table_id.clone(), *field_index))
                .or_default()
                .push(r);
        }
    }
    let keys: Vec<(String, usize)> = by_field.keys().cloned().collect();
    let results: Vec<Result<Option<CfExample>>> = keys
        .par_iter()
        .map(|(table_id, field_index)| {
            let Some(table) = tables.get(table_id) else {
                return Ok(None); // dangling record
            };
            let field = table.field(*field_index)?;
            let group = &by_field[&(table_id.clone(), *field_index)];
            let sigs = compute_cell_signatures(field, featurizer.vocab);

            let intent = label_intent_cf(group)?;
            let mut intent_label = vec![0.0; CF_HEADS.intents];
            intent_label[intent.index()] = 1.0;

            let mut focus_label = vec![0.0; CF_HEADS.focuses];
            let mut op_label = vec![0.0; CF_HEADS.operations];
            let mut ref_rows: Vec<usize> = Vec::new();
            for r in group.iter() {
                for f in label_focus_cf(r, field, &sigs, featurizer.vocab) {
                    focus_label[f.index()] = 1.0;
                }
                if let AnalysisRecord::Cf {
                    operation,
                    parameters,
                    ..
                } = r
                {
                    op_label[operation.index()] = 1.0;
                    ref_rows.extend(reference_cells(*operation, parameters, field, &sigs));
                }
            }

            let input = featurizer.field_input(table, *field_index)?;
            let reference = input
                .sampled
                .iter()
                .map(|i| if ref_rows.contains(i) { 1.0 } else { 0.0 })
                .collect();
            Ok(Some(CfExample {
                table_id: table_id.clone(),
                field_index: *field_index,
                input,
                labels: CfLabels {
                    intent: intent_label,
                    focus: focus_label,
                    operation: op_label,
                    reference,
                },
            }))
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        if let Some(ex) = r? {
            out.push(ex);
        }
    }
    Ok(out)
}

/// Build labeled chart examples: one per table carrying a chart record.
pub fn build_chart_examples(
    tables: &BTreeMap<String, Table>,
    records: &[AnalysisRecord],
    featurizer: &Featurizer,
) -> Result<Vec<ChartExample>> {
    let mut by_table: BTreeMap<String, Vec<&AnalysisRecord>> = BTreeMap::new();
    for r in records {
        if let AnalysisRecord::Chart { table_id, .. } = r {
            by_table.entry(table_id.clone()).or_default().push(r);
        }
    }
    let keys: Vec<String> = by_table.keys().cloned().collect();
    let results: Vec<Result<Option<ChartExample>>> = keys
        .par_iter()
        .map(|table_id| {
            let Some(table) = tables.get(table_id) else {
                return Ok(None);
            };
            let field_sigs = (0..table.fields.len())
                .map(|i| {
                    compute_field_signatures(
                        table,
                        i,
                        featurizer.vocab,
                        &featurizer.vocab.keywords_x,
                        &featurizer.vocab.keywords_y,
                    )
                })
                .collect::<Result<Vec<_>>>()?;

            let mut intent_label = vec![0.0; CHART_HEADS.intents];
            let mut focus_label = vec![0.0; CHART_HEADS.focuses];
            let mut type_label = vec![0.0; CHART_HEADS.operations];
            let mut axis_label = vec![[0.0f64; 2]; table.fields.len()];
            for r in &by_table[table_id] {
                let sem = label_semantics_chart(r, table, &field_sigs)?;
                for i in sem.intents {
                    intent_label[i.index()] = 1.0;
                }
                for f in sem.focuses {
                    focus_label[f.index()] = 1.0;
                }
                if let AnalysisRecord::Chart {
                    chart_type,
                    x_fields,
                    y_fields,
                    ..
                } = r
                {
                    type_label[chart_type.index()] = 1.0;
                    for &i in x_fields {
                        axis_label[i][0] = 1.0;
                    }
                    for &i in y_fields {
                        axis_label[i][1] = 1.0;
                    }
                }
            }
            let input = featurizer.table_input(table)?;
            Ok(Some(ChartExample {
                table_id: table_id.clone(),
                input,
                labels: ChartLabels {
                    intent: intent_label,
                    focus: focus_label,
                    chart_type: type_label,
                    axis: axis_label,
                },
            }))
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        if let Some(ex) = r? {
            out.push(ex);
        }
    }
    Ok(out)
}

fn pos_weight(pos: f64, neg: f64) -> f64 {
    if pos > 0.0 {
        neg / pos
    } else {
        1.0
    }
}

/// Class-frequency weights (negatives over positives) from the training
/// examples.
pub fn cf_pos_weights(examples: &[&CfExample]) -> PosWeights {
    let mut pos_i = [0.0; CF_HEADS.intents];
    let mut pos_f = [0.0; CF_HEADS.focuses];
    let mut pos_o = [0.0; CF_HEADS.operations];
    let mut pos_r = 0.0;
    let mut n_cells = 0.0;
    let n = examples.len() as f64;
    for ex in examples {
        for (a, b) in pos_i.iter_mut().zip(&ex.labels.intent) {
            *a += b;
        }
        for (a, b) in pos_f.iter_mut().zip(&ex.labels.focus) {
            *a += b;
        }
        for (a, b) in pos_o.iter_mut().zip(&ex.labels.operation) {
            *a += b;
        }
        pos_r += ex.labels.reference.iter().sum::<f64>();
        n_cells += ex.labels.reference.len() as f64;
    }
    PosWeights {
        intent: pos_i.iter().map(|p| pos_weight(*p, n - p)).collect(),
        focus: pos_f.iter().map(|p| pos_weight(*p, n - p)).collect(),
        operation: pos_o.iter().map(|p| pos_weight(*p, n - p)).collect(),
        reference: pos_weight(pos_r, n_cells - pos_r),
    }
}

pub fn chart_pos_weights(examples: &[&ChartExample]) -> PosWeights {
    let mut pos_i = [0.0; CHART_HEADS.intents];
    let mut pos_f = [0.0; CHART_HEADS.focuses];
    let mut pos_o = [0.0; CHART_HEADS.operations];
    let mut pos_r = 0.0;
    let mut n_axis = 0.0;
    let n = examples.len() as f64;
    for ex in examples {
        for (a, b) in pos_i.iter_mut().zip(&ex.labels.intent) {
            *a += b;
        }
        for (a, b) in pos_f.iter_mut().zip(&ex.labels.focus) {
            *a += b;
        }
        for (a, b) in pos_o.iter_mut().zip(&ex.labels.chart_type) {
            *a += b;
        }
        for axis in &ex.labels.axis {
            pos_r += axis[0] + axis[1];
            n_axis += 2.0;
        }
    }
    PosWeights {
        intent: pos_i.iter().map(|p| pos_weight(*p, n - p)).collect(),
        focus: pos_f.iter().map(|p| pos_weight(*p, n - p)).collect(),
        operation: pos_o.iter().map(|p| pos_weight(*p, n - p)).collect(),
        reference: pos_weight(pos_r, n_axis - pos_r),
    }
}

// ---------------------------------------------------------------------------
// Batch loss / gradients
// ---------------------------------------------------------------------------

/// Number of fixed accumulation chunks per batch. Keeping the chunking
/// independent of the live thread count makes gradients bit-reproducible
/// for any worker setting.
const GRAD_CHUNKS: usize = 8;

fn combine(
    parts: Vec<(ModelParameters, LossBreakdown)>,
    proto: &ModelParameters,
) -> (ModelParameters, LossBreakdown) {
    let mut grads = proto.zeros_like();
    let mut loss = LossBreakdown::default();
    for (g, l) in parts {
        add_params(&mut grads, g);
        loss.intent += l.intent;
        loss.focus += l.focus;
        loss.operation += l.operation;
        loss.reference += l.reference;
    }
    (grads, loss)
}

fn add_params(acc: &mut ModelParameters, mut other: ModelParameters) {
    let mut flat: Vec<f64> = Vec::new();
    other.visit_mut(&mut |_, s| flat.extend_from_slice(s));
    let mut i = 0;
    acc.visit_mut(&mut |_, s| {
        for v in s.iter_mut() {
            *v += flat[i];
            i += 1;
        }
    });
}

/// Loss and gradients of the weighted multi-task loss over a batch of
/// conditional-formatting examples. Task terms average over examples; the
/// reference term averages over all sampled cells of the batch. Sequences
/// are padded to the batch maximum.
pub fn cf_batch_gradients(
    params: &ModelParameters,
    examples: &[&CfExample],
    pos: &PosWeights,
    weights: &LossWeights,
) -> Result<(ModelParameters, LossBreakdown)> {
    let n_ex = examples.len().max(1) as f64;
    let total_cells: usize = examples.iter().map(|e| e.input.cell_vecs.len()).sum();
    let pad_to = 1 + examples
        .iter()
        .map(|e| e.input.cell_vecs.len())
        .max()
        .unwrap_or(0);
    let scale = CfGradScale {
        task: 1.0 / n_ex,
        reference: 1.0 / total_cells.max(1) as f64,
    };

    let chunk_size = examples.len().div_ceil(GRAD_CHUNKS).max(1);
    let parts: Vec<Result<(ModelParameters, LossBreakdown)>> = examples
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut grads = params.zeros_like();
            let mut loss = LossBreakdown::default();
            for ex in chunk {
                let l = cf_backward(
                    params,
                    &ex.input,
                    &ex.labels,
                    weights,
                    pos,
                    &scale,
                    Some(pad_to),
                    &mut grads,
                )?;
                loss.intent += l.intent;
                loss.focus += l.focus;
                loss.operation += l.operation;
                loss.reference += l.reference;
            }
            Ok((grads, loss))
        })
        .collect();
    let parts: Result<Vec<_>> = parts.into_iter().collect();
    let (grads, mut loss) = combine(parts?, params);
    loss.intent /= n_ex;
    loss.focus /= n_ex;
    loss.operation /= n_ex;
    loss.reference /= total_cells.max(1) as f64;
    Ok((grads, loss.finish(weights)))
}

/// Forward-only batch loss, same normalization as [`cf_batch_gradients`].
pub fn cf_batch_loss(
    params: &ModelParameters,
    examples: &[&CfExample],
    pos: &PosWeights,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    // Gradients are cheap at this scale; reuse the same path so the two
    // can never drift apart.
    Ok(cf_batch_gradients(params, examples, pos, weights)?.1)
}

pub fn chart_batch_gradients(
    params: &ModelParameters,
    examples: &[&ChartExample],
    pos: &PosWeights,
    weights: &LossWeights,
) -> Result<(ModelParameters, LossBreakdown)> {
    let n_ex = examples.len().max(1) as f64;
    let total_axis: usize = examples.iter().map(|e| 2 * e.input.field_vecs.len()).sum();
    let pad_to = 1 + examples
        .iter()
        .map(|e| e.input.field_vecs.len())
        .max()
        .unwrap_or(0);
    let scale = CfGradScale {
        task: 1.0 / n_ex,
        reference: 1.0 / total_axis.max(1) as f64,
    };

    let chunk_size = examples.len().div_ceil(GRAD_CHUNKS).max(1);
    let parts: Vec<Result<(ModelParameters, LossBreakdown)>> = examples
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut grads = params.zeros_like();
            let mut loss = LossBreakdown::default();
            for ex in chunk {
                let l = chart_backward(
                    params,
                    &ex.input,
                    &ex.labels,
                    weights,
                    pos,
                    &scale,
                    Some(pad_to),
                    &mut grads,
                )?;
                loss.intent += l.intent;
                loss.focus += l.focus;
                loss.operation += l.operation;
                loss.reference += l.reference;
            }
            Ok((grads, loss))
        })
        .collect();
    let parts: Result<Vec<_>> = parts.into_iter().collect();
    let (grads, mut loss) = combine(parts?, params);
    loss.intent /= n_ex;
    loss.focus /= n_ex;
    loss.operation /= n_ex;
    loss.reference /= total_axis.max(1) as f64;
    Ok((grads, loss.finish(weights)))
}

pub fn chart_batch_loss(
    params: &ModelParameters,
    examples: &[&ChartExample],
    pos: &PosWeights,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    Ok(chart_batch_gradients(params, examples, pos, weights)?.1)
}

// ---------------------------------------------------------------------------
// Optimizer and training loop
// ---------------------------------------------------------------------------

/// Adaptive-moment gradient descent (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut ModelParameters, grads: &mut ModelParameters) {
        self.t += 1;
        let mut flat: Vec<f64> = Vec::with_capacity(self.m.len());
        grads.visit_mut(&mut |_, s| flat.extend_from_slice(s));
        debug_assert_eq!(flat.len(), self.m.len());
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        params.visit_mut(&mut |_, s| {
            for x in s.iter_mut() {
                let g = flat[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let mhat = self.m[i] / bc1;
                let vhat = self.v[i] / bc2;
                *x -= self.lr * mhat / (vhat.sqrt() + self.eps);
                i += 1;
            }
        });
    }
}

pub fn count_params(params: &mut ModelParameters) -> usize {
    let mut n = 0;
    params.visit_mut(&mut |_, s| n += s.len());
    n
}

/// What happened during one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub n_train: usize,
    pub n_val: usize,
}

/// Trained parameters plus everything needed to reuse them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeModel {
    pub params: ModelParameters,
    pub pos_weights: PosWeights,
    pub report: TrainReport,
}

/// The serialized model file: both task families plus the run's effective
/// configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub ablation: AblationFlags,
    pub cf: Option<ModeModel>,
    pub chart: Option<ModeModel>,
}

impl TrainedModel {
    pub const FORMAT: &'static str = "tabsem.model";

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: TrainedModel = serde_json::from_str(&text)?;
        if model.format != Self::FORMAT {
            return Err(Error::InvalidConfig(format!(
                "not a model file (format '{}')",
                model.format
            )));
        }
        Ok(model)
    }

    pub fn cf_model(&self) -> Result<&ModeModel> {
        self.cf.as_ref().ok_or(Error::UntrainedModel)
    }

    pub fn chart_model(&self) -> Result<&ModeModel> {
        self.chart.as_ref().ok_or(Error::UntrainedModel)
    }
}

enum ModeExamples<'a> {
    Cf(Vec<&'a CfExample>),
    Chart(Vec<&'a ChartExample>),
}

fn train_mode(
    examples: ModeExamples,
    val_examples: ModeExamples,
    config: &ModelConfig,
    init_seed: u64,
) -> Result<ModeModel> {
    let heads = match examples {
        ModeExamples::Cf(_) => CF_HEADS,
        ModeExamples::Chart(_) => CHART_HEADS,
    };
    let weights = config.loss_weights;
    let pos = match &examples {
        ModeExamples::Cf(ex) => cf_pos_weights(ex),
        ModeExamples::Chart(ex) => chart_pos_weights(ex),
    };
    let mut params = ModelParameters::init(config, heads, init_seed);
    let n_params = count_params(&mut params);
    let mut adam = Adam::new(config.learning_rate, n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed ^ 0x5eed);

    // With an empty validation split, fall back to the training loss so
    // early stopping still tracks something real.
    let val_loss = |p: &ModelParameters| -> Result<f64> {
        match (&val_examples, &examples) {
            (ModeExamples::Cf(ex), ModeExamples::Cf(tr)) => {
                let ex = if ex.is_empty() { tr } else { ex };
                Ok(cf_batch_loss(p, ex, &pos, &weights)?.total)
            }
            (ModeExamples::Chart(ex), ModeExamples::Chart(tr)) => {
                let ex = if ex.is_empty() { tr } else { ex };
                Ok(chart_batch_loss(p, ex, &pos, &weights)?.total)
            }
            _ => unreachable!("mode mismatch"),
        }
    };

    let n_train = match &examples {
        ModeExamples::Cf(ex) => ex.len(),
        ModeExamples::Chart(ex) => ex.len(),
    };
    let n_val = match &val_examples {
        ModeExamples::Cf(ex) => ex.len(),
        ModeExamples::Chart(ex) => ex.len(),
    };

    let initial = val_loss(&params)?;
    let mut best = initial;
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut epochs_run = 0usize;

    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(config.batch_size) {
            let (mut grads, _) = match &examples {
                ModeExamples::Cf(ex) => {
                    let batch: Vec<&CfExample> = batch_idx.iter().map(|&i| ex[i]).collect();
                    cf_batch_gradients(&params, &batch, &pos, &weights)?
                }
                ModeExamples::Chart(ex) => {
                    let batch: Vec<&ChartExample> = batch_idx.iter().map(|&i| ex[i]).collect();
                    chart_batch_gradients(&params, &batch, &pos, &weights)?
                }
            };
            adam.step(&mut params, &mut grads);
        }
        let val = val_loss(&params)?;
        if val + 1e-12 < best {
            best = val;
            best_params = params.clone();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > config.patience {
                break;
            }
        }
    }
    Ok(ModeModel {
        params: best_params,
        pos_weights: pos,
        report: TrainReport {
            initial_val_loss: initial,
            best_val_loss: best,
            best_epoch,
            epochs_run,
            n_train,
            n_val,
        },
    })
}

/// Train both task families on a corpus: splits by table id (7:1:2),
/// computes class weights from the training split, runs mini-batch Adam
/// with early stopping on the validation loss, and returns the
/// best-validation parameters.
pub fn train(
    docs: &[TableDoc],
    records: &[AnalysisRecord],
    config: &ModelConfig,
    featurizer: &Featurizer,
) -> Result<TrainedModel> {
    config.validate()?;
    let tables = parse_tables(docs)?;
    let cf_examples = build_cf_examples(&tables, records, featurizer)?;
    let chart_examples = build_chart_examples(&tables, records, featurizer)?;
    if cf_examples.len() + chart_examples.len() < 10 {
        return Err(Error::CorpusTooSmall(
            cf_examples.len() + chart_examples.len(),
        ));
    }

    let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    let split = split_table_ids(&ids, config.seed);
    let in_split = |ids: &[String], id: &str| ids.iter().any(|x| x == id);

    let mut config = config.clone();
    if featurizer.ablation.no_semantics {
        config.loss_weights.alpha = 0.0;
        config.loss_weights.beta = 0.0;
    }

    let cf = if cf_examples.is_empty() {
        None
    } else {
        let train_ex: Vec<&CfExample> = cf_examples
            .iter()
            .filter(|e| in_split(&split.train, &e.table_id))
            .collect();
        let val_ex: Vec<&CfExample> = cf_examples
            .iter()
            .filter(|e| in_split(&split.val, &e.table_id))
            .collect();
        if train_ex.is_empty() {
            None
        } else {
            Some(train_mode(
                ModeExamples::Cf(train_ex),
                ModeExamples::Cf(val_ex),
                &config,
                config.seed,
            )?)
        }
    };
    let chart = if chart_examples.is_empty() {
        None
    } else {
        let train_ex: Vec<&ChartExample> = chart_examples
            .iter()
            .filter(|e| in_split(&split.train, &e.table_id))
            .collect();
        let val_ex: Vec<&ChartExample> = chart_examples
            .iter()
            .filter(|e| in_split(&split.val, &e.table_id))
            .collect();
        if train_ex.is_empty() {
            None
        } else {
            Some(train_mode(
                ModeExamples::Chart(train_ex),
                ModeExamples::Chart(val_ex),
                &config,
                config.seed + 1,
            )?)
        }
    };

    Ok(TrainedModel {
        format: TrainedModel::FORMAT.to_string(),
        version: 1,
        seed: config.seed,
        config: config.clone(),
        ablation: featurizer.ablation,
        cf,
        chart,
    })
}

/// Names exported for decoding: operation order matches the head outputs.
pub fn operation_names() -> Vec<&'static str> {
    OPERATIONS_CF.iter().map(|o| o.name()).collect()
}

pub fn chart_type_names() -> Vec<&'static str> {
    CHART_TYPES.iter().map(|t| t.name()).collect()
}

pub fn focus_codes() -> Vec<&'static str> {
    DATA_FOCUSES_CF.iter().map(|f| f.code()).collect()
}

pub fn chart_intent_codes() -> Vec<&'static str> {
    CHART_INTENTS
        .iter()
        .map(|i| match i {
            crate::semantics::ChartIntent::Relationship => "Rlt",
            crate::semantics::ChartIntent::Composition => "Cps",
            crate::semantics::ChartIntent::Comparison => "Cpr",
            crate::semantics::ChartIntent::TimeTrend => "Ttr",
        })
        .collect()
}

pub fn chart_focus_codes() -> Vec<&'static str> {
    CHART_FOCUSES
        .iter()
        .map(|f| match f {
            crate::semantics::ChartFocus::DateFormat => "Fmt",
            crate::semantics::ChartFocus::CommonAffix => "Caf",
            crate::semantics::ChartFocus::HeaderSimilarity => "Hsi",
            crate::semantics::ChartFocus::RangeAware => "Rag",
            crate::semantics::ChartFocus::Frequency => "Fre",
            crate::semantics::ChartFocus::FieldType => "Fty",
        })
        .collect()
}

/// Convenience re-export of the chart type enum for CLI use.
pub fn chart_type_by_name(name: &str) -> Option<ChartType> {
    CHART_TYPES.into_iter().find(|t| t.name() == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthSpec};
    use crate::embed::HashedNGramEmbedder;
    use crate::signatures::Vocabulary;

    #[test]
    fn split_fractions() {
        let ids: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
        let split = split_table_ids(&ids, 7);
        assert_eq!(split.sizes(), (70, 10, 20));
        let ids: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        let split = split_table_ids(&ids, 7);
        assert_eq!(split.sizes(), (7, 1, 2));
        // Deterministic given the seed.
        let again = split_table_ids(&ids, 7);
        assert_eq!(split.train, again.train);
    }

    #[test]
    fn examples_and_training_smoke() {
        let spec = SynthSpec {
            n_tables: 40,
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
            max_epochs: 2,
            ..ModelConfig::default()
        };
        let model = train(&corpus.tables, &corpus.records, &config, &fz).unwrap();
        let cf = model.cf.as_ref().expect("cf trained");
        assert!(cf.report.best_val_loss.is_finite());
        assert!(cf.report.n_train > 0);
        // Validation loss drops from epoch 0 to the best epoch.
        assert!(cf.report.best_val_loss < cf.report.initial_val_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = SynthSpec {
            n_tables: 25,
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
            max_epochs: 2,
            ..ModelConfig::default()
        };
        let mut a = train(&corpus.tables, &corpus.records, &config, &fz).unwrap();
        let mut b = train(&corpus.tables, &corpus.records, &config, &fz).unwrap();
        let ca = a.cf.as_mut().unwrap().params.checksum();
        let cb = b.cf.as_mut().unwrap().params.checksum();
        assert_eq!(ca, cb);
    }

    #[test]
    fn model_file_roundtrip() {
        let spec = SynthSpec {
            n_tables: 25,
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
            max_epochs: 1,
            ..ModelConfig::default()
        };
        let mut model = train(&corpus.tables, &corpus.records, &config, &fz).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let mut loaded = TrainedModel::load(&path).unwrap();
        assert_eq!(
            model.cf.as_mut().unwrap().params.checksum(),
            loaded.cf.as_mut().unwrap().params.checksum()
        );
    }
}
