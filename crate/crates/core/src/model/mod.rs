//! The learnable core: feature fusion of linguistic embeddings with
//! statistical signatures, a small pre-norm transformer encoder with token
//! type embeddings, four task heads (intent, focus, operation, reference)
//! and the weighted multi-task loss.
//!
//! Everything runs in f64 with hand-written gradients; [`train`] holds the
//! optimizer, splitting and the training loop.

pub mod nn;
pub mod train;

pub use train::{ModeModel, TrainReport, TrainedModel};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{embed_cell, embed_field_context, EmbeddingProvider};
use crate::signatures::{
    compute_cell_signatures, compute_field_signatures, sample_cells, Vocabulary, CELL_SIG_DIM,
    FIELD_SIG_DIM,
};
use crate::table::Table;
use crate::{Error, Result};
use nn::{Encoder, Linear, ParamVisit};

/// Scaling coefficients of the four task losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
        }
    }
}

/// Ablation switches mirroring the model variants: dropping the semantics
/// tasks and pruning, zeroing the statistical inputs, or zeroing the
/// linguistic inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_semantics: bool,
    pub no_statistical: bool,
    pub no_linguistic: bool,
}

/// Model and training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Encoder width D; must be divisible by `heads`.
    pub encoder_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    /// Text embedding width e.
    pub embed_dim: usize,
    pub loss_weights: LossWeights,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub sample_cap: usize,
    /// Parameters materialized for multi-bucket operations (2..=4).
    pub multi_param_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_dim: 64,
            layers: 2,
            heads: 4,
            ffn_mult: 4,
            embed_dim: 64,
            loss_weights: LossWeights::default(),
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            seed: 7,
            sample_cap: crate::signatures::DEFAULT_SAMPLE_CAP,
            multi_param_count: 2,
        }
    }
}

impl ModelConfig {
    /// Desk-scale defaults (D=64, L=2, A=4).
    pub fn desk() -> Self {
        ModelConfig::default()
    }

    /// Larger preset (D=256, A=8, L=6).
    pub fn paper_scale() -> Self {
        ModelConfig {
            encoder_dim: 256,
            heads: 8,
            layers: 6,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_dim == 0 || !self.encoder_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "encoder_dim {} must be a positive multiple of heads {}",
                self.encoder_dim, self.heads
            )));
        }
        let w = &self.loss_weights;
        if [w.alpha, w.beta, w.gamma, w.delta].iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidConfig(
                "loss weights must be non-negative".to_string(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(2..=4).contains(&self.multi_param_count) {
            return Err(Error::InvalidConfig(
                "multi_param_count must be within 2..=4".into(),
            ));
        }
        Ok(())
    }
}

/// Output sizes of the four heads for one task family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadDims {
    pub intents: usize,
    pub focuses: usize,
    pub operations: usize,
    pub reference: usize,
}

/// Conditional formatting: 2 intents, 7 focuses, 12 operations, scalar
/// per-cell reference score.
pub const CF_HEADS: HeadDims = HeadDims {
    intents: 2,
    focuses: 7,
    operations: 12,
    reference: 1,
};
/// Charts: 4 intents, 6 focuses, 4 chart types, (is_x, is_y) per field.
pub const CHART_HEADS: HeadDims = HeadDims {
    intents: 4,
    focuses: 6,
    operations: 4,
    reference: 2,
};

/// Token type ids for the fused sequence.
pub const TOKEN_TABLE: usize = 0;
pub const TOKEN_FIELD: usize = 1;
pub const TOKEN_CELL: usize = 2;

/// All learnable parameters of one task family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParameters {
    pub d: usize,
    pub e: usize,
    pub heads: HeadDims,
    pub linear_field: Linear,
    pub linear_cell: Linear,
    /// 3 x D: table, field and cell token type embeddings.
    pub token_type: Array2<f64>,
    pub encoder: Encoder,
    pub head_intent: Linear,
    pub head_focus: Linear,
    pub head_operation: Linear,
    pub head_reference: Linear,
}

impl ModelParameters {
    /// Random encoder and fusion weights, zero-initialized heads.
    pub fn init(config: &ModelConfig, heads: HeadDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.encoder_dim;
        let e = config.embed_dim;
        let hidden = d * config.ffn_mult;
        ModelParameters {
            d,
            e,
            heads,
            linear_field: Linear::xavier(e + FIELD_SIG_DIM, d, &mut rng),
            linear_cell: Linear::xavier(e + CELL_SIG_DIM, d, &mut rng),
            token_type: Array2::from_shape_fn((3, d), |_| {
                use rand::Rng;
                rng.gen_range(-0.05..0.05)
            }),
            encoder: Encoder::new(d, config.layers, config.heads, hidden, &mut rng),
            head_intent: Linear::zeros(d, heads.intents),
            head_focus: Linear::zeros(d, heads.focuses),
            head_operation: Linear::zeros(d, heads.operations),
            head_reference: Linear::zeros(d, heads.reference),
        }
    }

    /// Zeroed copy with the same shapes, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, s| s.fill(0.0));
        z
    }

    /// FNV hash over the parameter bytes, for determinism checks.
    pub fn checksum(&mut self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        self.visit_mut(&mut |_, s| {
            for v in s.iter() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        });
        h
    }
}

impl ParamVisit for ModelParameters {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.linear_field.visit_mut(f);
        self.linear_cell.visit_mut(f);
        f(
            "token_type",
            self.token_type.as_slice_mut().expect("contiguous"),
        );
        self.encoder.visit_mut(f);
        self.head_intent.visit_mut(f);
        self.head_focus.visit_mut(f);
        self.head_operation.visit_mut(f);
        self.head_reference.visit_mut(f);
    }
}

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

/// Featurized inputs of one field: the field-level vector and one vector
/// per sampled cell (embedding concatenated with the signature vector).
#[derive(Debug, Clone)]
pub struct FieldInput {
    pub field_vec: Vec<f64>,
    pub cell_vecs: Vec<Vec<f64>>,
    /// Row indices of the sampled cells, aligned with `cell_vecs`.
    pub sampled: Vec<usize>,
}

/// Featurized inputs of a whole table (chart mode): one field vector per
/// field.
#[derive(Debug, Clone)]
pub struct TableInput {
    pub field_vecs: Vec<Vec<f64>>,
}

/// Turns tables into model inputs, applying the ablation switches.
pub struct Featurizer<'a> {
    pub vocab: &'a Vocabulary,
    pub provider: &'a dyn EmbeddingProvider,
    pub sample_cap: usize,
    pub ablation: AblationFlags,
}

impl<'a> Featurizer<'a> {
    pub fn new(vocab: &'a Vocabulary, provider: &'a dyn EmbeddingProvider) -> Self {
        Featurizer {
            vocab,
            provider,
            sample_cap: crate::signatures::DEFAULT_SAMPLE_CAP,
            ablation: AblationFlags::default(),
        }
    }

    fn field_vector(&self, table: &Table, field_index: usize) -> Result<Vec<f64>> {
        let mut emb = if self.ablation.no_linguistic {
            vec![0.0; self.provider.dimension()]
        } else {
            embed_field_context(self.provider, table, field_index)?
        };
        let sig = compute_field_signatures(
            table,
            field_index,
            self.vocab,
            &self.vocab.keywords_x,
            &self.vocab.keywords_y,
        )?;
        let sig_vec = if self.ablation.no_statistical {
            vec![0.0; FIELD_SIG_DIM]
        } else {
            sig.to_vector()
        };
        emb.extend(sig_vec);
        Ok(emb)
    }

    /// Field-level input for conditional formatting: field vector plus the
    /// sampled cells' vectors.
    pub fn field_input(&self, table: &Table, field_index: usize) -> Result<FieldInput> {
        let field = table.field(field_index)?;
        let sigs = compute_cell_signatures(field, self.vocab);
        let sampled = sample_cells(field, &sigs, self.sample_cap);
        let field_vec = self.field_vector(table, field_index)?;
        let n = field.cells.len();
        let cell_vecs = sampled
            .iter()
            .map(|&i| {
                let mut emb = if self.ablation.no_linguistic {
                    vec![0.0; self.provider.dimension()]
                } else {
                    embed_cell(self.provider, &field.cells[i])
                };
                let sig_vec = if self.ablation.no_statistical {
                    vec![0.0; CELL_SIG_DIM]
                } else {
                    sigs[i].to_vector(n)
                };
                emb.extend(sig_vec);
                emb
            })
            .collect();
        Ok(FieldInput {
            field_vec,
            cell_vecs,
            sampled,
        })
    }

    /// Table-level input for charts: one field vector per field.
    pub fn table_input(&self, table: &Table) -> Result<TableInput> {
        if table.fields.is_empty() {
            return Err(Error::EmptyTable);
        }
        let field_vecs = (0..table.fields.len())
            .map(|i| self.field_vector(table, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(TableInput { field_vecs })
    }
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// Logits of the four conditional-formatting heads.
#[derive(Debug, Clone)]
pub struct CfLogits {
    pub intent: Vec<f64>,
    pub focus: Vec<f64>,
    pub operation: Vec<f64>,
    /// One logit per sampled cell.
    pub reference: Vec<f64>,
}

/// Logits of the four chart heads.
#[derive(Debug, Clone)]
pub struct ChartLogits {
    pub intent: Vec<f64>,
    pub focus: Vec<f64>,
    pub chart_type: Vec<f64>,
    /// Per field: (is_x, is_y).
    pub axis: Vec<[f64; 2]>,
}

pub(crate) struct CfForwardCache {
    field_raw: Array2<f64>,
    cells_raw: Array2<f64>,
    seq: Array2<f64>,
    types: Vec<usize>,
    mask: Vec<bool>,
    encoder: nn::EncoderCache,
    encoded: Array2<f64>,
    n_cells: usize,
}

fn relu_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

/// Fuse field and cell inputs into one token sequence, applying ReLU before
/// the linear projections. Sequences can be padded to `pad_to` tokens; the
/// returned mask marks real positions.
pub fn fuse_inputs(
    params: &ModelParameters,
    input: &FieldInput,
    pad_to: Option<usize>,
) -> Result<(Array2<f64>, Vec<usize>, Vec<bool>)> {
    let (seq, types, mask, _, _) = fuse_cf(params, input, pad_to)?;
    Ok((seq, types, mask))
}

type FusedSequence = (Array2<f64>, Vec<usize>, Vec<bool>, Array2<f64>, Array2<f64>);

fn fuse_cf(
    params: &ModelParameters,
    input: &FieldInput,
    pad_to: Option<usize>,
) -> Result<FusedSequence> {
    let in_field = params.e + FIELD_SIG_DIM;
    let in_cell = params.e + CELL_SIG_DIM;
    if input.field_vec.len() != in_field {
        return Err(Error::DimensionMismatch(format!(
            "field vector has {} entries, expected {in_field}",
            input.field_vec.len()
        )));
    }
    let b = input.cell_vecs.len();
    let total = pad_to.unwrap_or(1 + b).max(1 + b);

    let field_raw =
        Array2::from_shape_vec((1, in_field), relu_vec(&input.field_vec)).expect("shape");
    let mut cells_raw = Array2::zeros((total - 1, in_cell));
    for (i, cv) in input.cell_vecs.iter().enumerate() {
        if cv.len() != in_cell {
            return Err(Error::DimensionMismatch(format!(
                "cell vector has {} entries, expected {in_cell}",
                cv.len()
            )));
        }
        let r = relu_vec(cv);
        for (j, x) in r.iter().enumerate() {
            cells_raw[(i, j)] = *x;
        }
    }

    let mfr = params.linear_field.forward(&field_raw);
    let mcr = params.linear_cell.forward(&cells_raw);

    let mut seq = Array2::zeros((total, params.d));
    seq.row_mut(0).assign(&mfr.row(0));
    for i in 0..total - 1 {
        seq.row_mut(1 + i).assign(&mcr.row(i));
    }
    let mut types = vec![TOKEN_CELL; total];
    types[0] = TOKEN_FIELD;
    let mut mask = vec![false; total];
    mask[0] = true;
    for m in mask.iter_mut().take(1 + b).skip(1) {
        *m = true;
    }
    Ok((seq, types, mask, field_raw, cells_raw))
}

/// Run the encoder over a fused sequence with token type embeddings added
/// before the first layer.
pub fn encode(
    params: &ModelParameters,
    seq: &Array2<f64>,
    types: &[usize],
    mask: &[bool],
) -> Array2<f64> {
    let mut x = seq.clone();
    for (i, &t) in types.iter().enumerate() {
        let tt = params.token_type.row(t);
        let mut row = x.row_mut(i);
        row += &tt;
    }
    let (y, _) = params.encoder.forward(&x, mask);
    y
}

fn cf_forward_cached(
    params: &ModelParameters,
    input: &FieldInput,
    pad_to: Option<usize>,
) -> Result<(CfLogits, CfForwardCache)> {
    let (seq, types, mask, field_raw, cells_raw) = fuse_cf(params, input, pad_to)?;
    let mut x = seq.clone();
    for (i, &t) in types.iter().enumerate() {
        let tt = params.token_type.row(t);
        let mut row = x.row_mut(i);
        row += &tt;
    }
    let (encoded, enc_cache) = params.encoder.forward(&x, &mask);

    let q0 = encoded.slice(ndarray::s![0..1, ..]).to_owned();
    let intent = params.head_intent.forward(&q0).row(0).to_vec();
    let focus = params.head_focus.forward(&q0).row(0).to_vec();
    let operation = params.head_operation.forward(&q0).row(0).to_vec();
    let b = input.cell_vecs.len();
    let reference = if b > 0 {
        let qc = encoded.slice(ndarray::s![1..1 + b, ..]).to_owned();
        params.head_reference.forward(&qc).column(0).to_vec()
    } else {
        Vec::new()
    };
    let logits = CfLogits {
        intent,
        focus,
        operation,
        reference,
    };
    let cache = CfForwardCache {
        field_raw,
        cells_raw,
        seq,
        types,
        mask,
        encoder: enc_cache,
        encoded,
        n_cells: b,
    };
    Ok((logits, cache))
}

/// Forward pass for one field (conditional-formatting task family).
pub fn forward_cf(
    params: &ModelParameters,
    featurizer: &Featurizer,
    table: &Table,
    field_index: usize,
) -> Result<CfLogits> {
    let input = featurizer.field_input(table, field_index)?;
    Ok(cf_forward_cached(params, &input, None)?.0)
}

pub(crate) struct ChartForwardCache {
    fields_raw: Array2<f64>,
    seq: Array2<f64>,
    types: Vec<usize>,
    mask: Vec<bool>,
    encoder: nn::EncoderCache,
    encoded: Array2<f64>,
    n_fields: usize,
}

fn chart_forward_cached(
    params: &ModelParameters,
    input: &TableInput,
    pad_to: Option<usize>,
) -> Result<(ChartLogits, ChartForwardCache)> {
    let in_field = params.e + FIELD_SIG_DIM;
    let f = input.field_vecs.len();
    if f == 0 {
        return Err(Error::EmptyTable);
    }
    let total = pad_to.unwrap_or(1 + f).max(1 + f);

    let mut fields_raw = Array2::zeros((total - 1, in_field));
    for (i, fv) in input.field_vecs.iter().enumerate() {
        if fv.len() != in_field {
            return Err(Error::DimensionMismatch(format!(
                "field vector has {} entries, expected {in_field}",
                fv.len()
            )));
        }
        let r = relu_vec(fv);
        for (j, x) in r.iter().enumerate() {
            fields_raw[(i, j)] = *x;
        }
    }
    let mfr = params.linear_field.forward(&fields_raw);

    // The table token is the mean of the real fields' fused representations.
    let mut table_tok = ndarray::Array1::<f64>::zeros(params.d);
    for i in 0..f {
        table_tok += &mfr.row(i);
    }
    table_tok /= f as f64;

    let mut seq = Array2::zeros((total, params.d));
    seq.row_mut(0).assign(&table_tok);
    for i in 0..total - 1 {
        seq.row_mut(1 + i).assign(&mfr.row(i));
    }
    let mut types = vec![TOKEN_FIELD; total];
    types[0] = TOKEN_TABLE;
    let mut mask = vec![false; total];
    for m in mask.iter_mut().take(1 + f) {
        *m = true;
    }

    let mut x = seq.clone();
    for (i, &t) in types.iter().enumerate() {
        let tt = params.token_type.row(t);
        let mut row = x.row_mut(i);
        row += &tt;
    }
    let (encoded, enc_cache) = params.encoder.forward(&x, &mask);

    let q0 = encoded.slice(ndarray::s![0..1, ..]).to_owned();
    let intent = params.head_intent.forward(&q0).row(0).to_vec();
    let focus = params.head_focus.forward(&q0).row(0).to_vec();
    let chart_type = params.head_operation.forward(&q0).row(0).to_vec();
    let qf = encoded.slice(ndarray::s![1..1 + f, ..]).to_owned();
    let axis_mat = params.head_reference.forward(&qf);
    let axis = (0..f)
        .map(|i| [axis_mat[(i, 0)], axis_mat[(i, 1)]])
        .collect();

    let logits = ChartLogits {
        intent,
        focus,
        chart_type,
        axis,
    };
    let cache = ChartForwardCache {
        fields_raw,
        seq,
        types,
        mask,
        encoder: enc_cache,
        encoded,
        n_fields: f,
    };
    Ok((logits, cache))
}

/// Forward pass for one table (chart task family).
pub fn forward_chart(
    params: &ModelParameters,
    featurizer: &Featurizer,
    table: &Table,
) -> Result<ChartLogits> {
    let input = featurizer.table_input(table)?;
    Ok(chart_forward_cached(params, &input, None)?.0)
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Class-frequency positive weights (negatives over positives, from the
/// training split).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosWeights {
    pub intent: Vec<f64>,
    pub focus: Vec<f64>,
    pub operation: Vec<f64>,
    pub reference: f64,
}

impl PosWeights {
    pub fn uniform(heads: HeadDims) -> Self {
        PosWeights {
            intent: vec![1.0; heads.intents],
            focus: vec![1.0; heads.focuses],
            operation: vec![1.0; heads.operations],
            reference: 1.0,
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weighted binary cross-entropy from a logit:
/// p * y * softplus(-x) + (1 - y) * softplus(x).
pub fn wbce(logit: f64, label: f64, pos_weight: f64) -> f64 {
    pos_weight * label * softplus(-logit) + (1.0 - label) * softplus(logit)
}

/// Gradient of [`wbce`] with respect to the logit.
pub fn wbce_grad(logit: f64, label: f64, pos_weight: f64) -> f64 {
    -pos_weight * label * sigmoid(-logit) + (1.0 - label) * sigmoid(logit)
}

/// Per-task loss values plus the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub intent: f64,
    pub focus: f64,
    pub operation: f64,
    pub reference: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn finish(mut self, w: &LossWeights) -> Self {
        self.total = w.alpha * self.intent
            + w.beta * self.focus
            + w.gamma * self.operation
            + w.delta * self.reference;
        self
    }
}

/// Labels of one conditional-formatting example (multi-hot vectors; the
/// reference labels align with the sampled cells).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfLabels {
    pub intent: Vec<f64>,
    pub focus: Vec<f64>,
    pub operation: Vec<f64>,
    pub reference: Vec<f64>,
}

/// Labels of one chart example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartLabels {
    pub intent: Vec<f64>,
    pub focus: Vec<f64>,
    pub chart_type: Vec<f64>,
    pub axis: Vec<[f64; 2]>,
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch(format!(
            "{name}: got {got}, expected {want}"
        )));
    }
    Ok(())
}

/// Loss of one example with batch-normalizers of 1 (task terms summed over
/// classes, reference averaged over the example's cells).
pub fn compute_loss_cf(
    logits: &CfLogits,
    labels: &CfLabels,
    weights: &LossWeights,
    pos: &PosWeights,
) -> Result<LossBreakdown> {
    check_len("intent", logits.intent.len(), labels.intent.len())?;
    check_len("focus", logits.focus.len(), labels.focus.len())?;
    check_len("operation", logits.operation.len(), labels.operation.len())?;
    check_len("reference", logits.reference.len(), labels.reference.len())?;
    let sum3 = |xs: &[f64], ys: &[f64], ps: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .zip(ps)
            .map(|((x, y), p)| wbce(*x, *y, *p))
            .sum()
    };
    let mut parts = LossBreakdown {
        intent: sum3(&logits.intent, &labels.intent, &pos.intent),
        focus: sum3(&logits.focus, &labels.focus, &pos.focus),
        operation: sum3(&logits.operation, &labels.operation, &pos.operation),
        reference: 0.0,
        total: 0.0,
    };
    if !logits.reference.is_empty() {
        let n = logits.reference.len() as f64;
        parts.reference = logits
            .reference
            .iter()
            .zip(&labels.reference)
            .map(|(x, y)| wbce(*x, *y, pos.reference))
            .sum::<f64>()
            / n;
    }
    Ok(parts.finish(weights))
}

// ---------------------------------------------------------------------------
// Backward passes (gradient accumulation)
// ---------------------------------------------------------------------------

pub(crate) struct CfGradScale {
    /// Multiplier for the intent/focus/operation terms (e.g. weight / n_examples).
    pub task: f64,
    /// Multiplier for each reference logit term (e.g. delta / total_cells).
    pub reference: f64,
}

/// Accumulate gradients of the weighted loss for one example into `grads`.
/// Returns the unweighted per-task sums for reporting.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cf_backward(
    params: &ModelParameters,
    input: &FieldInput,
    labels: &CfLabels,
    weights: &LossWeights,
    pos: &PosWeights,
    scale: &CfGradScale,
    pad_to: Option<usize>,
    grads: &mut ModelParameters,
) -> Result<LossBreakdown> {
    let (logits, cache) = cf_forward_cached(params, input, pad_to)?;
    check_len("reference", logits.reference.len(), labels.reference.len())?;

    let sum3 = |xs: &[f64], ys: &[f64], ps: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .zip(ps)
            .map(|((x, y), p)| wbce(*x, *y, *p))
            .sum()
    };
    let parts = LossBreakdown {
        intent: sum3(&logits.intent, &labels.intent, &pos.intent),
        focus: sum3(&logits.focus, &labels.focus, &pos.focus),
        operation: sum3(&logits.operation, &labels.operation, &pos.operation),
        reference: logits
            .reference
            .iter()
            .zip(&labels.reference)
            .map(|(x, y)| wbce(*x, *y, pos.reference))
            .sum(),
        total: 0.0,
    };

    // Head logit gradients.
    let total = cache.seq.nrows();
    let mut d_encoded = Array2::zeros((total, params.d));

    let q0 = cache.encoded.slice(ndarray::s![0..1, ..]).to_owned();
    let grad3 = |xs: &[f64], ys: &[f64], ps: &[f64], coeff: f64| -> Array2<f64> {
        Array2::from_shape_vec(
            (1, xs.len()),
            xs.iter()
                .zip(ys)
                .zip(ps)
                .map(|((x, y), p)| coeff * wbce_grad(*x, *y, *p))
                .collect(),
        )
        .expect("shape")
    };
    let d_intent = grad3(
        &logits.intent,
        &labels.intent,
        &pos.intent,
        weights.alpha * scale.task,
    );
    let d_focus = grad3(
        &logits.focus,
        &labels.focus,
        &pos.focus,
        weights.beta * scale.task,
    );
    let d_op = grad3(
        &logits.operation,
        &labels.operation,
        &pos.operation,
        weights.gamma * scale.task,
    );
    let mut dq0 = params
        .head_intent
        .backward(&q0, &d_intent, &mut grads.head_intent);
    dq0 += &params
        .head_focus
        .backward(&q0, &d_focus, &mut grads.head_focus);
    dq0 += &params
        .head_operation
        .backward(&q0, &d_op, &mut grads.head_operation);
    d_encoded.row_mut(0).assign(&dq0.row(0));

    let b = cache.n_cells;
    if b > 0 {
        let qc = cache.encoded.slice(ndarray::s![1..1 + b, ..]).to_owned();
        let d_ref = Array2::from_shape_vec(
            (b, 1),
            logits
                .reference
                .iter()
                .zip(&labels.reference)
                .map(|(x, y)| weights.delta * scale.reference * wbce_grad(*x, *y, pos.reference))
                .collect(),
        )
        .expect("shape");
        let dqc = params
            .head_reference
            .backward(&qc, &d_ref, &mut grads.head_reference);
        for i in 0..b {
            d_encoded.row_mut(1 + i).assign(&dqc.row(i));
        }
    }

    // Encoder and token types.
    let dx = params
        .encoder
        .backward(&cache.encoder, &d_encoded, &mut grads.encoder);
    for (i, &t) in cache.types.iter().enumerate() {
        if cache.mask[i] {
            let mut row = grads.token_type.row_mut(t);
            row += &dx.row(i);
        }
    }

    // Fusion linears (ReLU applied before the linear maps; inputs are leaves).
    let d_field = dx.slice(ndarray::s![0..1, ..]).to_owned();
    params
        .linear_field
        .backward(&cache.field_raw, &d_field, &mut grads.linear_field);
    if total > 1 {
        let d_cells = dx.slice(ndarray::s![1.., ..]).to_owned();
        params
            .linear_cell
            .backward(&cache.cells_raw, &d_cells, &mut grads.linear_cell);
    }
    Ok(parts)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn chart_backward(
    params: &ModelParameters,
    input: &TableInput,
    labels: &ChartLabels,
    weights: &LossWeights,
    pos: &PosWeights,
    scale: &CfGradScale,
    pad_to: Option<usize>,
    grads: &mut ModelParameters,
) -> Result<LossBreakdown> {
    let (logits, cache) = chart_forward_cached(params, input, pad_to)?;
    if logits.axis.len() != labels.axis.len() {
        return Err(Error::ShapeMismatch(format!(
            "axis: got {}, expected {}",
            logits.axis.len(),
            labels.axis.len()
        )));
    }

    let sum3 = |xs: &[f64], ys: &[f64], ps: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .zip(ps)
            .map(|((x, y), p)| wbce(*x, *y, *p))
            .sum()
    };
    let axis_loss: f64 = logits
        .axis
        .iter()
        .zip(&labels.axis)
        .map(|(lx, ly)| wbce(lx[0], ly[0], pos.reference) + wbce(lx[1], ly[1], pos.reference))
        .sum();
    let parts = LossBreakdown {
        intent: sum3(&logits.intent, &labels.intent, &pos.intent),
        focus: sum3(&logits.focus, &labels.focus, &pos.focus),
        operation: sum3(&logits.chart_type, &labels.chart_type, &pos.operation),
        reference: axis_loss,
        total: 0.0,
    };

    let total = cache.seq.nrows();
    let mut d_encoded = Array2::zeros((total, params.d));

    let q0 = cache.encoded.slice(ndarray::s![0..1, ..]).to_owned();
    let grad3 = |xs: &[f64], ys: &[f64], ps: &[f64], coeff: f64| -> Array2<f64> {
        Array2::from_shape_vec(
            (1, xs.len()),
            xs.iter()
                .zip(ys)
                .zip(ps)
                .map(|((x, y), p)| coeff * wbce_grad(*x, *y, *p))
                .collect(),
        )
        .expect("shape")
    };
    let d_intent = grad3(
        &logits.intent,
        &labels.intent,
        &pos.intent,
        weights.alpha * scale.task,
    );
    let d_focus = grad3(
        &logits.focus,
        &labels.focus,
        &pos.focus,
        weights.beta * scale.task,
    );
    let d_type = grad3(
        &logits.chart_type,
        &labels.chart_type,
        &pos.operation,
        weights.gamma * scale.task,
    );
    let mut dq0 = params
        .head_intent
        .backward(&q0, &d_intent, &mut grads.head_intent);
    dq0 += &params
        .head_focus
        .backward(&q0, &d_focus, &mut grads.head_focus);
    dq0 += &params
        .head_operation
        .backward(&q0, &d_type, &mut grads.head_operation);
    d_encoded.row_mut(0).assign(&dq0.row(0));

    let f = cache.n_fields;
    let qf = cache.encoded.slice(ndarray::s![1..1 + f, ..]).to_owned();
    let mut d_axis = Array2::zeros((f, 2));
    for i in 0..f {
        for j in 0..2 {
            d_axis[(i, j)] = weights.delta
                * scale.reference
                * wbce_grad(logits.axis[i][j], labels.axis[i][j], pos.reference);
        }
    }
    let dqf = params
        .head_reference
        .backward(&qf, &d_axis, &mut grads.head_reference);
    for i in 0..f {
        let mut row = d_encoded.row_mut(1 + i);
        row += &dqf.row(i);
    }

    let dx = params
        .encoder
        .backward(&cache.encoder, &d_encoded, &mut grads.encoder);
    for (i, &t) in cache.types.iter().enumerate() {
        if cache.mask[i] {
            let mut row = grads.token_type.row_mut(t);
            row += &dx.row(i);
        }
    }

    // The table token is the mean of the field tokens, so its gradient
    // spreads evenly over the real fields.
    let d_table = dx.row(0).to_owned() / f as f64;
    let mut d_fields = dx.slice(ndarray::s![1.., ..]).to_owned();
    for i in 0..f {
        let mut row = d_fields.row_mut(i);
        row += &d_table;
    }
    params
        .linear_field
        .backward(&cache.fields_raw, &d_fields, &mut grads.linear_field);
    Ok(parts)
}

/// Logit-level loss for one chart example (normalizers of 1; axis loss
/// averaged over fields).
pub fn compute_loss_chart(
    logits: &ChartLogits,
    labels: &ChartLabels,
    weights: &LossWeights,
    pos: &PosWeights,
) -> Result<LossBreakdown> {
    check_len("intent", logits.intent.len(), labels.intent.len())?;
    check_len(
        "chart_type",
        logits.chart_type.len(),
        labels.chart_type.len(),
    )?;
    check_len("axis", logits.axis.len(), labels.axis.len())?;
    let sum3 = |xs: &[f64], ys: &[f64], ps: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .zip(ps)
            .map(|((x, y), p)| wbce(*x, *y, *p))
            .sum()
    };
    let mut parts = LossBreakdown {
        intent: sum3(&logits.intent, &labels.intent, &pos.intent),
        focus: sum3(&logits.focus, &labels.focus, &pos.focus),
        operation: sum3(&logits.chart_type, &labels.chart_type, &pos.operation),
        reference: 0.0,
        total: 0.0,
    };
    if !logits.axis.is_empty() {
        parts.reference = logits
            .axis
            .iter()
            .zip(&labels.axis)
            .map(|(lx, ly)| wbce(lx[0], ly[0], pos.reference) + wbce(lx[1], ly[1], pos.reference))
            .sum::<f64>()
            / (2.0 * logits.axis.len() as f64);
    }
    Ok(parts.finish(weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedNGramEmbedder;
    use crate::table::parse_table;
    use ndarray::Axis;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            encoder_dim: 8,
            layers: 1,
            heads: 2,
            ffn_mult: 2,
            embed_dim: 8,
            ..ModelConfig::default()
        }
    }

    fn sample_table() -> Table {
        let rows: Vec<Vec<String>> = vec![
            vec!["score".into(), "status".into()],
            vec!["10".into(), "GOOD".into()],
            vec!["20".into(), "none".into()],
            vec!["#REF!".into(), "GOOD".into()],
            vec!["40".into(), "GOOD".into()],
            vec!["50".into(), "BAD".into()],
        ];
        parse_table(&rows, true, "t").unwrap()
    }

    #[test]
    fn config_presets() {
        assert!(ModelConfig::desk().validate().is_ok());
        let paper = ModelConfig::paper_scale();
        assert_eq!((paper.encoder_dim, paper.heads, paper.layers), (256, 8, 6));
        let bad = ModelConfig {
            encoder_dim: 63,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fuse_shapes_and_token_types() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, CF_HEADS, 1);
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(8, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let table = sample_table();
        let input = fz.field_input(&table, 0).unwrap();
        let b = input.cell_vecs.len();
        assert!(b >= 1);
        let (seq, types, mask) = fuse_inputs(&params, &input, None).unwrap();
        assert_eq!(seq.nrows(), 1 + b);
        assert_eq!(types[0], TOKEN_FIELD);
        assert!(types[1..].iter().all(|t| *t == TOKEN_CELL));
        assert!(mask.iter().all(|m| *m));

        // Empty cell set still yields the field token.
        let empty = FieldInput {
            field_vec: input.field_vec.clone(),
            cell_vecs: vec![],
            sampled: vec![],
        };
        let (seq, _, _) = fuse_inputs(&params, &empty, None).unwrap();
        assert_eq!(seq.nrows(), 1);

        // Zero inputs map to the linear maps' bias rows (zero at init).
        let zeroed = FieldInput {
            field_vec: vec![0.0; 8 + FIELD_SIG_DIM],
            cell_vecs: vec![vec![0.0; 8 + CELL_SIG_DIM]],
            sampled: vec![0],
        };
        let (seq, _, _) = fuse_inputs(&params, &zeroed, None).unwrap();
        assert!(seq.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn forward_cf_shapes_and_zero_heads() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, CF_HEADS, 1);
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(8, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let table = sample_table();
        let logits = forward_cf(&params, &fz, &table, 0).unwrap();
        assert_eq!(logits.intent.len(), 2);
        assert_eq!(logits.focus.len(), 7);
        assert_eq!(logits.operation.len(), 12);
        let input = fz.field_input(&table, 0).unwrap();
        assert_eq!(logits.reference.len(), input.sampled.len());
        // Zero-initialized heads produce exactly zero logits.
        assert!(logits.intent.iter().all(|x| *x == 0.0));
        assert!(logits.reference.iter().all(|x| *x == 0.0));
        assert!((sigmoid(logits.intent[0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn forward_handles_very_long_fields() {
        // Sampling caps the sequence length, so a 10k-row field stays cheap
        // and finite.
        let config = tiny_config();
        let params = ModelParameters::init(&config, CF_HEADS, 5);
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(8, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let mut rows: Vec<Vec<String>> = vec![vec!["big".to_string()]];
        rows.extend((0..10_000).map(|i| vec![format!("{}", i % 997)]));
        let table = parse_table(&rows, true, "big").unwrap();
        let input = fz.field_input(&table, 0).unwrap();
        assert!(input.cell_vecs.len() <= crate::signatures::DEFAULT_SAMPLE_CAP);
        let logits = forward_cf(&params, &fz, &table, 0).unwrap();
        assert!(logits.operation.iter().all(|x| x.is_finite()));
        assert!(logits.reference.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn forward_chart_shapes() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, CHART_HEADS, 1);
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(8, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let table = sample_table();
        let logits = forward_chart(&params, &fz, &table).unwrap();
        assert_eq!(logits.intent.len(), 4);
        assert_eq!(logits.chart_type.len(), 4);
        assert_eq!(logits.axis.len(), 2);
    }

    #[test]
    fn chart_table_token_is_field_mean() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, CHART_HEADS, 2);
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(8, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let table = sample_table();
        let input = fz.table_input(&table).unwrap();
        let (_, cache) = chart_forward_cached(&params, &input, None).unwrap();
        let mfr = params.linear_field.forward(&cache.fields_raw);
        let mean = mfr.sum_axis(Axis(0)) / input.field_vecs.len() as f64;
        for j in 0..params.d {
            assert!((cache.seq[(0, j)] - mean[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        let w = LossWeights::default();
        let pos = PosWeights::uniform(CF_HEADS);
        // Single saturated logit drives the loss to ~0.
        let logits = CfLogits {
            intent: vec![50.0, -50.0],
            focus: vec![-50.0; 7],
            operation: vec![-50.0; 12],
            reference: vec![],
        };
        let labels = CfLabels {
            intent: vec![1.0, 0.0],
            focus: vec![0.0; 7],
            operation: vec![0.0; 12],
            reference: vec![],
        };
        let parts = compute_loss_cf(&logits, &labels, &w, &pos).unwrap();
        assert!(parts.total < 1e-9);

        // Single label-1 logit-0 term equals ln 2.
        let logits = CfLogits {
            intent: vec![0.0],
            focus: vec![],
            operation: vec![],
            reference: vec![],
        };
        let labels = CfLabels {
            intent: vec![1.0],
            focus: vec![],
            operation: vec![],
            reference: vec![],
        };
        let pos1 = PosWeights {
            intent: vec![1.0],
            focus: vec![],
            operation: vec![],
            reference: 1.0,
        };
        let parts = compute_loss_cf(&logits, &labels, &w, &pos1).unwrap();
        assert!((parts.intent - std::f64::consts::LN_2).abs() < 1e-12);

        // Weighted total is the exact weighted sum of the parts.
        let w2 = LossWeights {
            alpha: 2.0,
            beta: 0.5,
            gamma: 1.5,
            delta: 3.0,
        };
        let parts2 = compute_loss_cf(&logits, &labels, &w2, &pos1).unwrap();
        assert!((parts2.total - 2.0 * parts2.intent).abs() < 1e-12);

        let bad = CfLabels {
            intent: vec![1.0, 0.0],
            focus: vec![],
            operation: vec![],
            reference: vec![],
        };
        assert!(matches!(
            compute_loss_cf(&logits, &bad, &w, &pos1),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn padding_does_not_change_logits() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, CF_HEADS, 3);
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(8, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let table = sample_table();
        let input = fz.field_input(&table, 0).unwrap();
        let (a, _) = cf_forward_cached(&params, &input, None).unwrap();
        let (b, _) = cf_forward_cached(&params, &input, Some(input.cell_vecs.len() + 6)).unwrap();
        for (x, y) in a.reference.iter().zip(&b.reference) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in a.operation.iter().zip(&b.operation) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn serialization_roundtrip_same_outputs() {
        let config = tiny_config();
        let params = ModelParameters::init(&config, CF_HEADS, 9);
        let json = serde_json::to_string(&params).unwrap();
        let restored: ModelParameters = serde_json::from_str(&json).unwrap();
        let vocab = Vocabulary::default();
        let provider = HashedNGramEmbedder::new(8, 0);
        let fz = Featurizer::new(&vocab, &provider);
        let table = sample_table();
        let a = forward_cf(&params, &fz, &table, 0).unwrap();
        let b = forward_cf(&restored, &fz, &table, 0).unwrap();
        assert_eq!(a.operation, b.operation);
        assert_eq!(a.reference, b.reference);
    }
}
