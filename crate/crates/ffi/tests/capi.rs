//! Exercises the C ABI end to end: train a small model through the Rust
//! API, then load it and recommend through the extern "C" surface.

use std::ffi::{CStr, CString};

use tabsem::corpus::{generate_synthetic, SynthSpec};
use tabsem::embed::HashedNGramEmbedder;
use tabsem::model::train::train;
use tabsem::model::{Featurizer, ModelConfig};
use tabsem::signatures::Vocabulary;

use tabsem_ffi::*;

fn train_tiny_model(dir: &std::path::Path) -> std::path::PathBuf {
    let spec = SynthSpec {
        n_tables: 40,
        seed: 7,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec).unwrap();
    let vocab = Vocabulary::default();
    let provider = HashedNGramEmbedder::new(16, 0);
    let featurizer = Featurizer::new(&vocab, &provider);
    let config = ModelConfig {
        encoder_dim: 16,
        layers: 1,
        heads: 2,
        embed_dim: 16,
        max_epochs: 3,
        ..ModelConfig::default()
    };
    let model = train(&corpus.tables, &corpus.records, &config, &featurizer).unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    path
}

#[test]
fn load_recommend_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = train_tiny_model(dir.path());

    let path = CString::new(model_path.to_str().unwrap()).unwrap();
    let mut model: *mut TsModel = std::ptr::null_mut();
    let status = unsafe { ts_model_load(path.as_ptr(), &mut model) };
    assert_eq!(status, TsStatus::Ok);
    assert!(!model.is_null());

    let csv = CString::new("score\n60\n70\n80\n94\n55\n61\n77\n83\n").unwrap();
    let mut table: *mut TsTable = std::ptr::null_mut();
    let status = unsafe { ts_table_from_csv_text(csv.as_ptr(), true, &mut table) };
    assert_eq!(status, TsStatus::Ok);
    assert_eq!(unsafe { ts_table_field_count(table) }, 1);

    let mut json: *mut std::ffi::c_char = std::ptr::null_mut();
    let status = unsafe { ts_recommend_cf_json(model, table, 0, 3, &mut json) };
    assert_eq!(status, TsStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }
        .to_str()
        .unwrap()
        .to_string();
    unsafe { ts_string_free(json) };
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let list = parsed.as_array().unwrap();
    assert!(!list.is_empty());
    assert!(list[0]["score"].as_f64().unwrap() > 0.0);

    // Chart recommendations over a two-field CSV.
    let csv = CString::new(
        "date,sales_total\n2021-01-01,5\n2021-02-01,8\n2021-03-01,6\n2021-04-01,9\n2021-05-01,7\n2021-06-01,4\n",
    )
    .unwrap();
    let mut chart_table: *mut TsTable = std::ptr::null_mut();
    let status = unsafe { ts_table_from_csv_text(csv.as_ptr(), true, &mut chart_table) };
    assert_eq!(status, TsStatus::Ok);
    let mut json: *mut std::ffi::c_char = std::ptr::null_mut();
    let status = unsafe { ts_recommend_chart_json(model, chart_table, 2, &mut json) };
    assert_eq!(status, TsStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }
        .to_str()
        .unwrap()
        .to_string();
    unsafe { ts_string_free(json) };
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(!parsed.as_array().unwrap().is_empty());

    unsafe {
        ts_table_free(table);
        ts_table_free(chart_table);
        ts_model_free(model);
    }
}

#[test]
fn error_paths_set_messages() {
    let mut model: *mut TsModel = std::ptr::null_mut();
    let path = CString::new("/nonexistent/model.json").unwrap();
    let status = unsafe { ts_model_load(path.as_ptr(), &mut model) };
    assert_eq!(status, TsStatus::IoError);
    let msg = ts_last_error_message();
    assert!(!msg.is_null());
    let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap().to_string();
    unsafe { ts_string_free(msg) };
    assert!(text.contains("model"));

    // Null arguments are rejected, not dereferenced.
    let status = unsafe { ts_model_load(std::ptr::null(), &mut model) };
    assert_eq!(status, TsStatus::NullArgument);
    let status = unsafe { ts_table_from_csv_text(std::ptr::null(), true, std::ptr::null_mut()) };
    assert_eq!(status, TsStatus::NullArgument);
    unsafe { ts_table_free(std::ptr::null_mut()) };
    unsafe { ts_model_free(std::ptr::null_mut()) };
    unsafe { ts_string_free(std::ptr::null_mut()) };
}

#[test]
fn generated_header_exists() {
    // build.rs writes the C header next to the crate sources.
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tabsem.h");
    let text = std::fs::read_to_string(header).expect("generated header");
    assert!(text.contains("ts_model_load"));
    assert!(text.contains("ts_recommend_cf_json"));
    assert!(text.contains("TsStatus"));
}
