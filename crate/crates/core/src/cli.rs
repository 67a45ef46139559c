//! Command-line interface: corpus preparation, synthetic generation,
//! featurization, labeling, training, recommendation and evaluation.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::corpus::{self, AnalysisRecord, JsonlHeader, SynthSpec, TableDoc};
use crate::embed::{EmbeddingProvider, ExternalProvider, HashedNGramEmbedder};
use crate::evalkit::{
    self, CfAnswer, ChartAnswer, GoldSemantics, PredictedSemantics, SemanticsRecall,
};
use crate::model::train::{self as mtrain, SplitIds, TrainedModel};
use crate::model::{forward_cf, forward_chart, sigmoid, AblationFlags, Featurizer, ModelConfig};
use crate::recommend::{recommend_cf, recommend_chart};
use crate::semantics::{label_focus_cf, label_intent_cf, label_semantics_chart, IntentFocusMap};
use crate::signatures::{compute_cell_signatures, compute_field_signatures, Vocabulary};
use crate::table::Table;
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tabsem",
    version,
    about = "Learns user intent and data focus over tables and recommends conditional formatting and charts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for featurization (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct AblationArgs {
    /// Drop the intent/focus tasks and all semantic pruning.
    #[arg(long)]
    no_semantics: bool,
    /// Zero the statistical signature inputs.
    #[arg(long)]
    no_statistical: bool,
    /// Zero the linguistic embedding inputs.
    #[arg(long)]
    no_linguistic: bool,
}

impl AblationArgs {
    fn flags(&self) -> AblationFlags {
        AblationFlags {
            no_semantics: self.no_semantics,
            no_statistical: self.no_statistical,
            no_linguistic: self.no_linguistic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Prepare a corpus: merge records, filter by coverage, deduplicate and
    /// down-sample tables by schema.
    Prep {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        coverage_threshold: f64,
        #[arg(long, default_value_t = 5)]
        max_per_schema: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generate a seeded synthetic labeled corpus.
    Synth {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        rows_min: usize,
        #[arg(long, default_value_t = 16)]
        rows_max: usize,
        /// Pattern weights as key=weight pairs (e.g. IsError=1.0); defaults
        /// to the shipped mix.
        #[arg(long, value_delimiter = ',')]
        mix: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute per-field and per-cell signatures into JSONL.
    Featurize {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Compute rule-based golden semantics labels for a corpus.
    Label {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Train the conditional-formatting and chart models.
    Train {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Preset: desk (D=64, L=2, A=4) or paper (D=256, L=6, A=8).
        #[arg(long, default_value = "desk")]
        scale: String,
        /// JSON file overriding individual model-config fields.
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Precomputed embeddings JSONL ({"text_hash", "vector"}) replacing
        /// the built-in hashed n-gram embedder.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        ablation: AblationArgs,
    },
    /// Recommend conditional formatting (default) or charts for a CSV table.
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        table: PathBuf,
        /// Field index; all fields when omitted.
        #[arg(long)]
        field: Option<usize>,
        /// Recommend charts instead of conditional formatting.
        #[arg(long)]
        chart: bool,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Include the human-readable explanation in the output.
        #[arg(long)]
        explain: bool,
        /// The CSV has no header row.
        #[arg(long)]
        no_header: bool,
        /// Intent/focus map JSON overriding the shipped default.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Precomputed embeddings JSONL replacing the built-in embedder.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trained model on a corpus split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        records: PathBuf,
        /// Split to evaluate: train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also print the plain-text metric tables.
        #[arg(long)]
        text: bool,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Precomputed embeddings JSONL replacing the built-in embedder.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        ablation: AblationArgs,
    },
}

/// CLI entry point; returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.workers {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_vocab(path: &Option<PathBuf>) -> Result<Vocabulary> {
    match path {
        Some(p) => Vocabulary::load(p),
        None => Ok(Vocabulary::default()),
    }
}

fn load_map(path: &Option<PathBuf>) -> Result<IntentFocusMap> {
    match path {
        Some(p) => IntentFocusMap::load(p),
        None => Ok(IntentFocusMap::default()),
    }
}

/// The built-in hashed n-gram embedder, or a file-backed external provider
/// whose width must match the model's embedding dimension.
fn make_provider(
    embeddings: &Option<PathBuf>,
    embed_dim: usize,
) -> Result<Box<dyn EmbeddingProvider>> {
    match embeddings {
        None => Ok(Box::new(HashedNGramEmbedder::new(embed_dim, 0))),
        Some(path) => {
            let provider = ExternalProvider::load(path)?;
            if provider.dimension() != embed_dim {
                return Err(Error::DimensionMismatch(format!(
                    "external embeddings have width {}, the model expects {embed_dim}",
                    provider.dimension()
                )));
            }
            Ok(Box::new(provider))
        }
    }
}

fn parse_mix(pairs: &[String]) -> Result<Option<BTreeMap<String, f64>>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut mix = BTreeMap::new();
    for pair in pairs {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidSpec(format!("bad mix entry '{pair}'")))?;
        let weight: f64 = value
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad mix weight '{value}'")))?;
        mix.insert(key.to_string(), weight);
    }
    Ok(Some(mix))
}

fn write_json_line<W: std::io::Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn std::io::Write>> {
    match path {
        Some(p) => Ok(Box::new(std::io::BufWriter::new(std::fs::File::create(p)?))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Prep {
            tables,
            records,
            out_dir,
            coverage_threshold,
            max_per_schema,
            seed,
        } => prep(
            &tables,
            &records,
            &out_dir,
            coverage_threshold,
            max_per_schema,
            seed,
        ),
        Command::Synth {
            n,
            seed,
            rows_min,
            rows_max,
            mix,
            out_dir,
        } => {
            let mut spec = SynthSpec {
                n_tables: n,
                seed,
                rows_min,
                rows_max,
                ..SynthSpec::default()
            };
            if let Some(mix) = parse_mix(&mix)? {
                spec.pattern_mix = mix;
            }
            synth(&spec, &out_dir)
        }
        Command::Featurize { tables, out, vocab } => featurize(&tables, &out, &vocab),
        Command::Label {
            tables,
            records,
            out,
            vocab,
        } => label(&tables, &records, &out, &vocab),
        Command::Train {
            tables,
            records,
            out,
            seed,
            scale,
            model_config,
            vocab,
            embeddings,
            ablation,
        } => train(
            &tables,
            &records,
            &out,
            seed,
            &scale,
            &model_config,
            &vocab,
            &embeddings,
            ablation.flags(),
        ),
        Command::Recommend {
            model,
            table,
            field,
            chart,
            k,
            explain,
            no_header,
            map,
            vocab,
            embeddings,
            out,
        } => recommend(
            &model,
            &table,
            field,
            chart,
            k,
            explain,
            no_header,
            &map,
            &vocab,
            &embeddings,
            &out,
        ),
        Command::Eval {
            model,
            tables,
            records,
            split,
            k,
            out,
            text,
            map,
            vocab,
            embeddings,
            ablation,
        } => eval(
            &model,
            &tables,
            &records,
            &split,
            k,
            &out,
            text,
            &map,
            &vocab,
            &embeddings,
            ablation.flags(),
        ),
    }
}

fn prep(
    tables_path: &Path,
    records_path: &Path,
    out_dir: &Path,
    coverage_threshold: f64,
    max_per_schema: usize,
    seed: u64,
) -> Result<()> {
    let tables = corpus::read_tables_jsonl(tables_path)?;
    let records = corpus::read_records_jsonl(records_path)?;

    let merged = corpus::merge_records(&records);
    let parsed: BTreeMap<String, Table> = tables
        .iter()
        .map(|d| Ok((d.id.clone(), d.to_table()?)))
        .collect::<Result<_>>()?;
    let filtered = corpus::filter_by_coverage(merged, &parsed, coverage_threshold);
    let sampled = corpus::dedup_and_sample(tables, max_per_schema, seed);
    let final_records = corpus::drop_dangling_records(filtered, &sampled);

    std::fs::create_dir_all(out_dir)?;
    let config = json!({
        "coverage_threshold": coverage_threshold,
        "max_per_schema": max_per_schema,
    });
    let header = JsonlHeader::new("tabsem.tables")
        .with_seed(seed)
        .with_config(config.clone());
    corpus::write_tables_jsonl(&out_dir.join("tables.jsonl"), &header, &sampled)?;
    let header = JsonlHeader::new("tabsem.records")
        .with_seed(seed)
        .with_config(config);
    corpus::write_records_jsonl(&out_dir.join("records.jsonl"), &header, &final_records)?;
    eprintln!(
        "kept {} tables, {} records",
        sampled.len(),
        final_records.len()
    );
    Ok(())
}

fn synth(spec: &SynthSpec, out_dir: &Path) -> Result<()> {
    let corpus = corpus::generate_synthetic(spec)?;
    std::fs::create_dir_all(out_dir)?;
    let config = serde_json::to_value(spec)?;
    let header = JsonlHeader::new("tabsem.tables")
        .with_seed(spec.seed)
        .with_config(config.clone());
    corpus::write_tables_jsonl(&out_dir.join("tables.jsonl"), &header, &corpus.tables)?;
    let header = JsonlHeader::new("tabsem.records")
        .with_seed(spec.seed)
        .with_config(config);
    corpus::write_records_jsonl(&out_dir.join("records.jsonl"), &header, &corpus.records)?;
    eprintln!(
        "wrote {} tables, {} records",
        corpus.tables.len(),
        corpus.records.len()
    );
    Ok(())
}

fn featurize(tables_path: &Path, out: &Path, vocab_path: &Option<PathBuf>) -> Result<()> {
    let vocab = load_vocab(vocab_path)?;
    let docs = corpus::read_tables_jsonl(tables_path)?;
    let rows: Vec<Result<Vec<serde_json::Value>>> = docs
        .par_iter()
        .map(|doc| {
            let table = doc.to_table()?;
            let mut out = Vec::with_capacity(table.fields.len());
            for fi in 0..table.fields.len() {
                let fsig = compute_field_signatures(
                    &table,
                    fi,
                    &vocab,
                    &vocab.keywords_x,
                    &vocab.keywords_y,
                )?;
                let csigs = compute_cell_signatures(&table.fields[fi], &vocab);
                out.push(json!({
                    "table_id": doc.id,
                    "field_index": fi,
                    "field_signature": fsig,
                    "cell_signatures": csigs,
                }));
            }
            Ok(out)
        })
        .collect();

    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_json_line(&mut w, &JsonlHeader::new("tabsem.features"))?;
    for row in rows {
        for value in row? {
            write_json_line(&mut w, &value)?;
        }
    }
    Ok(())
}

fn label(
    tables_path: &Path,
    records_path: &Path,
    out: &Path,
    vocab_path: &Option<PathBuf>,
) -> Result<()> {
    let vocab = load_vocab(vocab_path)?;
    let docs = corpus::read_tables_jsonl(tables_path)?;
    let records = corpus::read_records_jsonl(records_path)?;
    let tables = mtrain::parse_tables(&docs)?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_json_line(&mut w, &JsonlHeader::new("tabsem.labels"))?;

    let mut by_field: BTreeMap<(String, usize), Vec<&AnalysisRecord>> = BTreeMap::new();
    let mut by_table: BTreeMap<String, Vec<&AnalysisRecord>> = BTreeMap::new();
    for r in &records {
        match r {
            AnalysisRecord::Cf {
                table_id,
                field_index,
                ..
            } => {
                by_field
                    .entry((table_id.clone(), *field_index))
                    .or_default()
                    .push(r);
            }
            AnalysisRecord::Chart { table_id, .. } => {
                by_table.entry(table_id.clone()).or_default().push(r);
            }
        }
    }
    for ((table_id, field_index), group) in &by_field {
        let Some(table) = tables.get(table_id) else {
            continue;
        };
        let field = table.field(*field_index)?;
        let sigs = compute_cell_signatures(field, &vocab);
        let intent = label_intent_cf(group)?;
        let mut focuses = BTreeSet::new();
        for r in group {
            focuses.extend(label_focus_cf(r, field, &sigs, &vocab));
        }
        let focuses: Vec<_> = focuses.into_iter().collect();
        write_json_line(
            &mut w,
            &json!({
                "kind": "cf_label",
                "table_id": table_id,
                "field_index": field_index,
                "intent": intent,
                "focuses": focuses,
            }),
        )?;
    }
    for (table_id, group) in &by_table {
        let Some(table) = tables.get(table_id) else {
            continue;
        };
        let field_sigs = (0..table.fields.len())
            .map(|i| {
                compute_field_signatures(table, i, &vocab, &vocab.keywords_x, &vocab.keywords_y)
            })
            .collect::<Result<Vec<_>>>()?;
        for r in group {
            let sem = label_semantics_chart(r, table, &field_sigs)?;
            write_json_line(
                &mut w,
                &json!({
                    "kind": "chart_label",
                    "table_id": table_id,
                    "intents": sem.intents,
                    "focuses": sem.focuses,
                    "x_focuses": sem.x_focuses,
                    "y_focuses": sem.y_focuses,
                }),
            )?;
        }
    }
    Ok(())
}

/// Merge a JSON override file field-by-field onto a config preset.
fn merge_config(base: &ModelConfig, path: &Path) -> Result<ModelConfig> {
    let mut value = serde_json::to_value(base)?;
    let over: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let serde_json::Value::Object(over) = over else {
        return Err(Error::InvalidConfig(
            "model config must be a JSON object".to_string(),
        ));
    };
    let serde_json::Value::Object(ref mut map) = value else {
        unreachable!()
    };
    for (k, v) in over {
        map.insert(k, v);
    }
    Ok(serde_json::from_value(value)?)
}

#[allow(clippy::too_many_arguments)]
fn train(
    tables_path: &Path,
    records_path: &Path,
    out: &Path,
    seed: Option<u64>,
    scale: &str,
    model_config: &Option<PathBuf>,
    vocab_path: &Option<PathBuf>,
    embeddings: &Option<PathBuf>,
    ablation: AblationFlags,
) -> Result<()> {
    let mut config = match scale {
        "desk" => ModelConfig::desk(),
        "paper" => ModelConfig::paper_scale(),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown scale '{other}' (expected desk or paper)"
            )))
        }
    };
    if let Some(path) = model_config {
        config = merge_config(&config, path)?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;

    let vocab = load_vocab(vocab_path)?;
    let provider = make_provider(embeddings, config.embed_dim)?;
    let featurizer = Featurizer {
        vocab: &vocab,
        provider: provider.as_ref(),
        sample_cap: config.sample_cap,
        ablation,
    };

    let docs = corpus::read_tables_jsonl(tables_path)?;
    let records = corpus::read_records_jsonl(records_path)?;
    let model = mtrain::train(&docs, &records, &config, &featurizer)?;
    model.save(out)?;
    if let Some(cf) = &model.cf {
        eprintln!(
            "cf: {} train / {} val examples, best val loss {:.4} at epoch {}",
            cf.report.n_train, cf.report.n_val, cf.report.best_val_loss, cf.report.best_epoch
        );
    }
    if let Some(chart) = &model.chart {
        eprintln!(
            "chart: {} train / {} val examples, best val loss {:.4} at epoch {}",
            chart.report.n_train,
            chart.report.n_val,
            chart.report.best_val_loss,
            chart.report.best_epoch
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn recommend(
    model_path: &Path,
    table_path: &Path,
    field: Option<usize>,
    chart: bool,
    k: usize,
    explain: bool,
    no_header: bool,
    map_path: &Option<PathBuf>,
    vocab_path: &Option<PathBuf>,
    embeddings: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<()> {
    let model = TrainedModel::load(model_path)?;
    let vocab = load_vocab(vocab_path)?;
    let map = load_map(map_path)?;
    let provider = make_provider(embeddings, model.config.embed_dim)?;
    let featurizer = Featurizer {
        vocab: &vocab,
        provider: provider.as_ref(),
        sample_cap: model.config.sample_cap,
        ablation: model.ablation,
    };
    let table_id = table_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "table".to_string());
    let table = crate::table::read_csv_path(table_path, !no_header, &table_id)?;

    let mut w = out_writer(out)?;
    let header = JsonlHeader::new("tabsem.recommendations")
        .with_seed(model.seed)
        .with_config(json!({
            "k": k,
            "chart": chart,
            "model_config": model.config,
            "ablation": model.ablation,
        }));
    write_json_line(&mut w, &header)?;

    if chart {
        let recs = recommend_chart(&model, &featurizer, &table, k)?;
        for r in recs {
            let mut value = serde_json::to_value(&r)?;
            value["table_id"] = json!(table.id);
            if !explain {
                value.as_object_mut().expect("object").remove("explanation");
            }
            write_json_line(&mut w, &value)?;
        }
    } else {
        let fields: Vec<usize> = match field {
            Some(f) => {
                if f >= table.fields.len() {
                    return Err(Error::IndexOutOfRange {
                        index: f,
                        len: table.fields.len(),
                    });
                }
                vec![f]
            }
            None => (0..table.fields.len()).collect(),
        };
        for fi in fields {
            let recs = recommend_cf(&model, &featurizer, &table, fi, k, &map)?;
            for r in recs {
                let mut value = serde_json::to_value(&r)?;
                value["table_id"] = json!(table.id);
                value["field_index"] = json!(fi);
                if !explain {
                    value.as_object_mut().expect("object").remove("explanation");
                }
                write_json_line(&mut w, &value)?;
            }
        }
    }
    Ok(())
}

/// Everything eval derives from one corpus + model pair.
pub struct EvalOutcome {
    pub metrics: serde_json::Value,
    pub text: String,
}

#[allow(clippy::too_many_arguments)]
fn eval(
    model_path: &Path,
    tables_path: &Path,
    records_path: &Path,
    split: &str,
    k: usize,
    out: &Path,
    text: bool,
    map_path: &Option<PathBuf>,
    vocab_path: &Option<PathBuf>,
    embeddings: &Option<PathBuf>,
    extra_ablation: AblationFlags,
) -> Result<()> {
    let model = TrainedModel::load(model_path)?;
    let vocab = load_vocab(vocab_path)?;
    let map = load_map(map_path)?;
    let provider = make_provider(embeddings, model.config.embed_dim)?;
    let docs = corpus::read_tables_jsonl(tables_path)?;
    let records = corpus::read_records_jsonl(records_path)?;
    let outcome = evaluate_corpus_with_provider(
        &model,
        &vocab,
        &map,
        provider.as_ref(),
        &docs,
        &records,
        split,
        k,
        extra_ablation,
    )?;
    std::fs::write(out, serde_json::to_string_pretty(&outcome.metrics)?)?;
    if text {
        println!("{}", outcome.text);
    }
    Ok(())
}

/// Run the full evaluation pipeline over one split of a corpus with the
/// built-in embedder. Shared by the CLI and the acceptance suite.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_corpus(
    model: &TrainedModel,
    vocab: &Vocabulary,
    map: &IntentFocusMap,
    docs: &[TableDoc],
    records: &[AnalysisRecord],
    split: &str,
    k: usize,
    extra_ablation: AblationFlags,
) -> Result<EvalOutcome> {
    let provider = HashedNGramEmbedder::new(model.config.embed_dim, 0);
    evaluate_corpus_with_provider(
        model,
        vocab,
        map,
        &provider,
        docs,
        records,
        split,
        k,
        extra_ablation,
    )
}

/// [`evaluate_corpus`] with an explicit embedding provider.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_corpus_with_provider(
    model: &TrainedModel,
    vocab: &Vocabulary,
    map: &IntentFocusMap,
    provider: &dyn EmbeddingProvider,
    docs: &[TableDoc],
    records: &[AnalysisRecord],
    split: &str,
    k: usize,
    extra_ablation: AblationFlags,
) -> Result<EvalOutcome> {
    let ablation = AblationFlags {
        no_semantics: model.ablation.no_semantics || extra_ablation.no_semantics,
        no_statistical: model.ablation.no_statistical || extra_ablation.no_statistical,
        no_linguistic: model.ablation.no_linguistic || extra_ablation.no_linguistic,
    };
    let featurizer = Featurizer {
        vocab,
        provider,
        sample_cap: model.config.sample_cap,
        ablation,
    };

    let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    let splits = mtrain::split_table_ids(&ids, model.seed);
    let chosen: BTreeSet<&str> = match split {
        "train" => splits.train.iter().map(String::as_str).collect(),
        "val" => splits.val.iter().map(String::as_str).collect(),
        "test" => splits.test.iter().map(String::as_str).collect(),
        "all" => ids.iter().map(String::as_str).collect(),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown split '{other}' (expected train, val, test or all)"
            )))
        }
    };

    let tables = mtrain::parse_tables(docs)?;

    // Gold sets restricted to the chosen split.
    let mut gold_cf: BTreeMap<(String, usize), Vec<CfAnswer>> = BTreeMap::new();
    let mut gold_chart: BTreeMap<String, Vec<ChartAnswer>> = BTreeMap::new();
    let mut cf_groups: BTreeMap<(String, usize), Vec<&AnalysisRecord>> = BTreeMap::new();
    for r in records {
        if !chosen.contains(r.table_id()) || !tables.contains_key(r.table_id()) {
            continue;
        }
        match r {
            AnalysisRecord::Cf {
                table_id,
                field_index,
                operation,
                parameters,
                ..
            } => {
                gold_cf
                    .entry((table_id.clone(), *field_index))
                    .or_default()
                    .push(CfAnswer {
                        operation: *operation,
                        parameters: parameters.clone(),
                    });
                cf_groups
                    .entry((table_id.clone(), *field_index))
                    .or_default()
                    .push(r);
            }
            AnalysisRecord::Chart {
                table_id,
                chart_type,
                x_fields,
                y_fields,
            } => {
                gold_chart
                    .entry(table_id.clone())
                    .or_default()
                    .push(ChartAnswer {
                        chart_type: *chart_type,
                        x_fields: x_fields.clone(),
                        y_fields: y_fields.clone(),
                    });
            }
        }
    }

    type CfRow = (
        (String, usize),
        Vec<CfAnswer>,
        PredictedSemantics,
        GoldSemantics,
    );
    type ChartRow = (String, Vec<ChartAnswer>, PredictedSemantics, GoldSemantics);

    // Conditional-formatting predictions and semantics scores per gold field.
    let cf_keys: Vec<(String, usize)> = gold_cf.keys().cloned().collect();
    let cf_results: Vec<Result<CfRow>> = cf_keys
        .par_iter()
        .map(|key| {
            let (table_id, field_index) = key;
            let table = &tables[table_id];
            let field = table.field(*field_index)?;
            let recs = recommend_cf(model, &featurizer, table, *field_index, k.max(3), map)?;
            let answers: Vec<CfAnswer> = recs
                .iter()
                .map(|r| CfAnswer {
                    operation: r.operation,
                    parameters: r.parameters.iter().map(|p| p.value.clone()).collect(),
                })
                .collect();

            let logits = forward_cf(&model.cf_model()?.params, &featurizer, table, *field_index)?;
            let predicted = PredictedSemantics {
                intent_scores: logits.intent.iter().map(|x| sigmoid(*x)).collect(),
                focus_scores: logits.focus.iter().map(|x| sigmoid(*x)).collect(),
            };
            let sigs = compute_cell_signatures(field, vocab);
            let group = &cf_groups[key];
            let intent = label_intent_cf(group)?;
            let mut focuses = BTreeSet::new();
            for r in group.iter() {
                for f in label_focus_cf(r, field, &sigs, vocab) {
                    focuses.insert(f.index());
                }
            }
            let gold_sem = GoldSemantics {
                intents: BTreeSet::from([intent.index()]),
                focuses,
            };
            Ok((key.clone(), answers, predicted, gold_sem))
        })
        .collect();

    let mut pred_cf: BTreeMap<(String, usize), Vec<CfAnswer>> = BTreeMap::new();
    let mut pred_sem: BTreeMap<(String, usize), PredictedSemantics> = BTreeMap::new();
    let mut gold_sem: BTreeMap<(String, usize), GoldSemantics> = BTreeMap::new();
    for r in cf_results {
        let (key, answers, predicted, gold) = r?;
        pred_cf.insert(key.clone(), answers);
        pred_sem.insert(key.clone(), predicted);
        gold_sem.insert(key, gold);
    }

    // Chart predictions and semantics per gold table.
    let chart_keys: Vec<String> = gold_chart.keys().cloned().collect();
    let chart_results: Vec<Result<ChartRow>> = chart_keys
        .par_iter()
        .map(|table_id| {
            let table = &tables[table_id];
            let recs = recommend_chart(model, &featurizer, table, k.max(3))?;
            let answers: Vec<ChartAnswer> = recs
                .iter()
                .map(|r| ChartAnswer {
                    chart_type: r.chart_type,
                    x_fields: r.x_fields.clone(),
                    y_fields: r.y_fields.clone(),
                })
                .collect();
            let logits = forward_chart(&model.chart_model()?.params, &featurizer, table)?;
            let predicted = PredictedSemantics {
                intent_scores: logits.intent.iter().map(|x| sigmoid(*x)).collect(),
                focus_scores: logits.focus.iter().map(|x| sigmoid(*x)).collect(),
            };
            let field_sigs = (0..table.fields.len())
                .map(|i| {
                    compute_field_signatures(table, i, vocab, &vocab.keywords_x, &vocab.keywords_y)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut intents = BTreeSet::new();
            let mut focuses = BTreeSet::new();
            for g in &gold_chart[table_id] {
                let record = AnalysisRecord::Chart {
                    table_id: table_id.clone(),
                    chart_type: g.chart_type,
                    x_fields: g.x_fields.clone(),
                    y_fields: g.y_fields.clone(),
                };
                let sem = label_semantics_chart(&record, table, &field_sigs)?;
                intents.extend(sem.intents.iter().map(|i| i.index()));
                focuses.extend(sem.focuses.iter().map(|f| f.index()));
            }
            Ok((
                table_id.clone(),
                answers,
                predicted,
                GoldSemantics { intents, focuses },
            ))
        })
        .collect();

    let mut pred_chart: BTreeMap<String, Vec<ChartAnswer>> = BTreeMap::new();
    let mut pred_chart_sem: BTreeMap<String, PredictedSemantics> = BTreeMap::new();
    let mut gold_chart_sem: BTreeMap<String, GoldSemantics> = BTreeMap::new();
    for r in chart_results {
        let (key, answers, predicted, gold) = r?;
        pred_chart.insert(key.clone(), answers);
        pred_chart_sem.insert(key.clone(), predicted);
        gold_chart_sem.insert(key, gold);
    }

    let cf_metrics = if gold_cf.is_empty() {
        None
    } else {
        Some(evalkit::compute_cf_metrics(&pred_cf, &gold_cf)?)
    };
    let chart_metrics = if gold_chart.is_empty() {
        None
    } else {
        Some(evalkit::compute_chart_metrics(&pred_chart, &gold_chart)?)
    };
    let sem_cf: Option<SemanticsRecall> = if ablation.no_semantics || gold_sem.is_empty() {
        None
    } else {
        Some(evalkit::semantics_recall(&pred_sem, &gold_sem, 1)?)
    };
    let sem_chart: Option<SemanticsRecall> = if ablation.no_semantics || gold_chart_sem.is_empty() {
        None
    } else {
        Some(evalkit::semantics_recall(
            &pred_chart_sem,
            &gold_chart_sem,
            1,
        )?)
    };

    let metrics = json!({
        "run": {
            "seed": model.seed,
            "config": model.config,
            "ablation": ablation,
            "split": split,
            "split_sizes": {
                "train": splits.train.len(),
                "val": splits.val.len(),
                "test": splits.test.len(),
            },
            "k": k,
        },
        "cf": cf_metrics,
        "chart": chart_metrics,
        "semantics": {
            "cf": sem_cf,
            "chart": sem_chart,
        },
    });
    let text = evalkit::render_text_report(
        cf_metrics.as_ref(),
        chart_metrics.as_ref(),
        sem_cf.as_ref(),
        sem_chart.as_ref(),
    );
    Ok(EvalOutcome { metrics, text })
}

/// Split sizes as reported by eval, for reuse in tests.
pub fn split_sizes(docs: &[TableDoc], seed: u64) -> SplitIds {
    let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    mtrain::split_table_ids(&ids, seed)
}
