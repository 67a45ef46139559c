//! C ABI over the recommendation library: opaque handles, status codes and
//! JSON string results. Every returned string is owned by the caller and
//! must be released with [`ts_string_free`]; every handle has a matching
//! `_free` function. Handles are not thread-safe for concurrent mutation
//! but may be shared for concurrent reads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use tabsem::embed::HashedNGramEmbedder;
use tabsem::model::{Featurizer, TrainedModel};
use tabsem::recommend::{recommend_cf, recommend_chart};
use tabsem::semantics::IntentFocusMap;
use tabsem::signatures::Vocabulary;
use tabsem::table::Table;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    DataError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let cstring = CString::new(message).unwrap_or_else(|_| {
        CString::new("error message contained a NUL byte").expect("static message")
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

/// A loaded model plus the vocabulary and intent/focus map it decodes with.
pub struct TsModel {
    model: TrainedModel,
    vocab: Vocabulary,
    map: IntentFocusMap,
    provider: HashedNGramEmbedder,
}

/// A parsed table.
pub struct TsTable {
    table: Table,
}

fn cstr_to_str<'a>(ptr: *const c_char) -> Result<&'a str, TsStatus> {
    if ptr.is_null() {
        set_error("null string argument".to_string());
        return Err(TsStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".to_string());
        TsStatus::InvalidUtf8
    })
}

fn into_out_string(json: String, out: *mut *mut c_char) -> TsStatus {
    match CString::new(json) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            TsStatus::Ok
        }
        Err(_) => {
            set_error("result contained a NUL byte".to_string());
            TsStatus::DataError
        }
    }
}

/// Last error message of this thread, or NULL when no error occurred.
/// The caller owns the returned string.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by this library, or NULL.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Load a trained model file. On success `*out` owns the handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_model_load(path: *const c_char, out: *mut *mut TsModel) -> TsStatus {
    if out.is_null() {
        set_error("null output pointer".to_string());
        return TsStatus::NullArgument;
    }
    let path = match cstr_to_str(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match TrainedModel::load(Path::new(path)) {
        Ok(model) => {
            let provider = HashedNGramEmbedder::new(model.config.embed_dim, 0);
            let handle = Box::new(TsModel {
                model,
                vocab: Vocabulary::default(),
                map: IntentFocusMap::default(),
                provider,
            });
            unsafe { *out = Box::into_raw(handle) };
            TsStatus::Ok
        }
        Err(e) => {
            set_error(format!("loading model: {e}"));
            TsStatus::IoError
        }
    }
}

/// Release a model handle.
///
/// # Safety
/// `model` must come from [`ts_model_load`], or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ts_model_free(model: *mut TsModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Parse a CSV file into a table handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_table_from_csv(
    path: *const c_char,
    has_header: bool,
    out: *mut *mut TsTable,
) -> TsStatus {
    if out.is_null() {
        set_error("null output pointer".to_string());
        return TsStatus::NullArgument;
    }
    let path = match cstr_to_str(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let id = Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "table".to_string());
    match tabsem::table::read_csv_path(Path::new(path), has_header, &id) {
        Ok(table) => {
            unsafe { *out = Box::into_raw(Box::new(TsTable { table })) };
            TsStatus::Ok
        }
        Err(e) => {
            set_error(format!("reading csv: {e}"));
            TsStatus::IoError
        }
    }
}

/// Parse CSV text into a table handle.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_table_from_csv_text(
    text: *const c_char,
    has_header: bool,
    out: *mut *mut TsTable,
) -> TsStatus {
    if out.is_null() {
        set_error("null output pointer".to_string());
        return TsStatus::NullArgument;
    }
    let text = match cstr_to_str(text) {
        Ok(t) => t,
        Err(status) => return status,
    };
    match tabsem::table::read_csv(text.as_bytes(), has_header, "table") {
        Ok(table) => {
            unsafe { *out = Box::into_raw(Box::new(TsTable { table })) };
            TsStatus::Ok
        }
        Err(e) => {
            set_error(format!("parsing csv: {e}"));
            TsStatus::DataError
        }
    }
}

/// Release a table handle.
///
/// # Safety
/// `table` must come from a `ts_table_from_*` function, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ts_table_free(table: *mut TsTable) {
    if !table.is_null() {
        drop(unsafe { Box::from_raw(table) });
    }
}

/// Number of fields in a table, or -1 on a NULL handle.
///
/// # Safety
/// `table` must be a valid table handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ts_table_field_count(table: *const TsTable) -> i64 {
    if table.is_null() {
        return -1;
    }
    unsafe { &*table }.table.fields.len() as i64
}

fn featurizer<'a>(handle: &'a TsModel) -> Featurizer<'a> {
    Featurizer {
        vocab: &handle.vocab,
        provider: &handle.provider,
        sample_cap: handle.model.config.sample_cap,
        ablation: handle.model.ablation,
    }
}

/// Top-k conditional-formatting recommendations for one field, as a JSON
/// array string owned by the caller.
///
/// # Safety
/// `model` and `table` must be valid handles; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_recommend_cf_json(
    model: *const TsModel,
    table: *const TsTable,
    field_index: usize,
    k: usize,
    out_json: *mut *mut c_char,
) -> TsStatus {
    if model.is_null() || table.is_null() || out_json.is_null() {
        set_error("null handle".to_string());
        return TsStatus::NullArgument;
    }
    let handle = unsafe { &*model };
    let table = &unsafe { &*table }.table;
    match recommend_cf(
        &handle.model,
        &featurizer(handle),
        table,
        field_index,
        k,
        &handle.map,
    ) {
        Ok(recs) => match serde_json::to_string(&recs) {
            Ok(json) => into_out_string(json, out_json),
            Err(e) => {
                set_error(format!("serializing: {e}"));
                TsStatus::DataError
            }
        },
        Err(e) => {
            set_error(format!("recommending: {e}"));
            TsStatus::DataError
        }
    }
}

/// Top-k chart recommendations for a table, as a JSON array string owned by
/// the caller.
///
/// # Safety
/// `model` and `table` must be valid handles; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_recommend_chart_json(
    model: *const TsModel,
    table: *const TsTable,
    k: usize,
    out_json: *mut *mut c_char,
) -> TsStatus {
    if model.is_null() || table.is_null() || out_json.is_null() {
        set_error("null handle".to_string());
        return TsStatus::NullArgument;
    }
    let handle = unsafe { &*model };
    let table = &unsafe { &*table }.table;
    match recommend_chart(&handle.model, &featurizer(handle), table, k) {
        Ok(recs) => match serde_json::to_string(&recs) {
            Ok(json) => into_out_string(json, out_json),
            Err(e) => {
                set_error(format!("serializing: {e}"));
                TsStatus::DataError
            }
        },
        Err(e) => {
            set_error(format!("recommending: {e}"));
            TsStatus::DataError
        }
    }
}
