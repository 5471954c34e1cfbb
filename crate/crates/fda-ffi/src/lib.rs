//! C ABI over the core toolkit.
//!
//! Conventions:
//! - Handles (`FdaDataset`, `FdaModel`) are opaque; create them through the
//!   constructors here and release them with the matching `_free` function.
//! - Every fallible function returns an [`FdaStatus`]; outputs are written
//!   through out-pointers only on `FDA_STATUS_OK`.
//! - On failure, `fda_last_error_message` returns a thread-local
//!   NUL-terminated description valid until the next failing call on the
//!   same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fda_core::backbone::{propagate_graph, Adjacency, EmbeddingTable};
use fda_core::config::{PartialRunConfig, RunConfig};
use fda_core::dataset::InteractionDataset;
use fda_core::trainer::{BackboneKind, Trainer};
use fda_core::{checkpoint, report, FdaError};

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdaStatus {
    Ok = 0,
    /// A pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A configuration value or argument was rejected.
    InvalidArgument = 3,
    /// Reading or writing files failed.
    Io = 4,
    /// The dataset violated a structural invariant.
    InvalidDataset = 5,
    /// Training produced a non-finite quantity.
    Diverged = 6,
    /// A checkpoint was missing, corrupt, or mismatched.
    Checkpoint = 7,
    /// An unexpected internal failure.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &FdaError) -> FdaStatus {
    match err {
        FdaError::Io { .. } => FdaStatus::Io,
        FdaError::MalformedLine { .. }
        | FdaError::UnknownFormat(_)
        | FdaError::InvalidConfig(_)
        | FdaError::Json(_) => FdaStatus::InvalidArgument,
        FdaError::InvalidDataset(_)
        | FdaError::UnmappedAttribute { .. }
        | FdaError::EmptyGroup(_) => FdaStatus::InvalidDataset,
        FdaError::Diverged { .. } | FdaError::NonFiniteGradient => FdaStatus::Diverged,
        FdaError::Checkpoint(_) => FdaStatus::Checkpoint,
    }
}

fn fail(err: FdaError) -> FdaStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

/// Runs a closure, converting panics into `FDA_STATUS_INTERNAL`.
fn guarded(f: impl FnOnce() -> FdaStatus) -> FdaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            FdaStatus::Internal
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, FdaStatus> {
    if ptr.is_null() {
        set_error("string argument is NULL");
        return Err(FdaStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        FdaStatus::InvalidUtf8
    })
}

macro_rules! non_null {
    ($ptr:expr, $name:literal) => {
        if $ptr.is_null() {
            set_error(concat!($name, " is NULL"));
            return FdaStatus::NullPointer;
        }
    };
}

/// Opaque prepared-dataset handle.
pub struct FdaDataset {
    inner: InteractionDataset,
}

/// Opaque trained-model handle: scoring embeddings plus the backbone used
/// to produce them.
pub struct FdaModel {
    table: EmbeddingTable,
    backbone: BackboneKind,
}

/// Ranking and fairness metrics at one cutoff K.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FdaMetrics {
    pub hit_ratio: f64,
    pub ndcg: f64,
    pub demographic_parity: f64,
    pub equal_opportunity: f64,
}

/// The last error message for this thread. Never NULL; empty when no error
/// has occurred. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fda_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// The crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a prepared dataset directory (as written by `fda prepare`).
///
/// # Safety
/// `dir` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fda_dataset_load(
    dir: *const c_char,
    out: *mut *mut FdaDataset,
) -> FdaStatus {
    guarded(|| {
        non_null!(out, "out");
        let dir = match cstr_arg(dir) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match fda_core::dataset::load_prepared(Path::new(dir)) {
            Ok((ds, _manifest)) => {
                *out = Box::into_raw(Box::new(FdaDataset { inner: ds }));
                FdaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Generates the bundled synthetic corpus with planted group skew.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fda_dataset_synthetic(seed: u64, out: *mut *mut FdaDataset) -> FdaStatus {
    guarded(|| {
        non_null!(out, "out");
        let ds = fda_core::synth::planted_skew(&fda_core::synth::SynthConfig::directional(), seed);
        *out = Box::into_raw(Box::new(FdaDataset { inner: ds }));
        FdaStatus::Ok
    })
}

/// Number of users in the dataset; 0 if the handle is NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fda_dataset_num_users(ds: *const FdaDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.num_users
}

/// Number of items in the dataset; 0 if the handle is NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fda_dataset_num_items(ds: *const FdaDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.num_items
}

/// Releases a dataset handle. NULL is a no-op.
///
/// # Safety
/// `ds` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fda_dataset_free(ds: *mut FdaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a model on a dataset.
///
/// `config_json` is a flat JSON object of overrides over the defaults (the
/// same keys as the CLI config file), or NULL / "{}" for pure defaults.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` a valid pointer; `config_json`
/// NULL or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fda_train(
    ds: *const FdaDataset,
    config_json: *const c_char,
    out: *mut *mut FdaModel,
) -> FdaStatus {
    guarded(|| {
        non_null!(ds, "dataset");
        non_null!(out, "out");
        let overrides = if config_json.is_null() {
            PartialRunConfig::default()
        } else {
            let text = match cstr_arg(config_json) {
                Ok(s) => s,
                Err(st) => return st,
            };
            match serde_json::from_str::<PartialRunConfig>(text) {
                Ok(p) => p,
                Err(e) => {
                    return fail(FdaError::InvalidConfig(format!("config_json: {e}")));
                }
            }
        };
        let cfg = match RunConfig::resolve(None, None, &overrides) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let train_cfg = match cfg.train_config() {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let backbone = train_cfg.backbone;
        let dataset = &(*ds).inner;
        let table = match Trainer::new(dataset, train_cfg).and_then(|mut t| {
            t.run_to_end()?;
            Ok(t.selected_table().clone())
        }) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        *out = Box::into_raw(Box::new(FdaModel { table, backbone }));
        FdaStatus::Ok
    })
}

/// Loads the model stored in a checkpoint directory.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fda_model_load(dir: *const c_char, out: *mut *mut FdaModel) -> FdaStatus {
    guarded(|| {
        non_null!(out, "out");
        let dir = match cstr_arg(dir) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match checkpoint::load(Path::new(dir)) {
            Ok(data) => {
                *out = Box::into_raw(Box::new(FdaModel {
                    table: data.table,
                    backbone: data.manifest.backbone,
                }));
                FdaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Predicted preference score for one (user, item) pair.
///
/// # Safety
/// `model` must be a live model handle and `out_score` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fda_model_score(
    model: *const FdaModel,
    user: usize,
    item: usize,
    out_score: *mut f64,
) -> FdaStatus {
    guarded(|| {
        non_null!(model, "model");
        non_null!(out_score, "out_score");
        let table = &(*model).table;
        if user >= table.num_users || item >= table.num_items {
            set_error("user or item index out of range");
            return FdaStatus::InvalidArgument;
        }
        *out_score = table.score(user, item);
        FdaStatus::Ok
    })
}

/// Evaluates a model on a dataset at cutoff `k`.
///
/// # Safety
/// `model` and `ds` must be live handles and `out_metrics` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fda_evaluate(
    model: *const FdaModel,
    ds: *const FdaDataset,
    k: usize,
    out_metrics: *mut FdaMetrics,
) -> FdaStatus {
    guarded(|| {
        non_null!(model, "model");
        non_null!(ds, "dataset");
        non_null!(out_metrics, "out_metrics");
        let dataset = &(*ds).inner;
        let model = &*model;
        if k == 0 {
            set_error("k must be positive");
            return FdaStatus::InvalidArgument;
        }
        if model.table.num_users != dataset.num_users
            || model.table.num_items != dataset.num_items
        {
            set_error("model and dataset shapes disagree");
            return FdaStatus::InvalidArgument;
        }
        let scored = match model.backbone {
            BackboneKind::Mf => model.table.clone(),
            BackboneKind::Graph => {
                propagate_graph(&model.table, &Adjacency::from_train(dataset), 1)
            }
        };
        match report::evaluate_table(&scored, dataset, &[k], 1) {
            Ok(per_k) => {
                let m = per_k[0];
                *out_metrics = FdaMetrics {
                    hit_ratio: m.hr,
                    ndcg: m.ndcg,
                    demographic_parity: m.dp,
                    equal_opportunity: m.eo,
                };
                FdaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a model handle. NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fda_model_free(model: *mut FdaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn last_error() -> String {
        unsafe {
            CStr::from_ptr(fda_last_error_message())
                .to_string_lossy()
                .into_owned()
        }
    }

    fn synthetic() -> *mut FdaDataset {
        let mut ds = ptr::null_mut();
        let st = unsafe { fda_dataset_synthetic(7, &mut ds) };
        assert_eq!(st, FdaStatus::Ok);
        ds
    }

    fn quick_train(ds: *const FdaDataset, extra: &str) -> *mut FdaModel {
        let cfg = CString::new(format!(
            r#"{{"epochs": 3, "warmup_epochs": 1, "eval_every": 3, "dim": 8, "batch_size": 64, "k_list": [5]{}{}"#,
            if extra.is_empty() { "" } else { ", " },
            format!("{extra}}}")
        ))
        .unwrap();
        let mut model = ptr::null_mut();
        let st = unsafe { fda_train(ds, cfg.as_ptr(), &mut model) };
        assert_eq!(st, FdaStatus::Ok, "{}", last_error());
        model
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(
                fda_dataset_load(ptr::null(), ptr::null_mut()),
                FdaStatus::NullPointer
            );
            let mut out = ptr::null_mut();
            assert_eq!(fda_dataset_load(ptr::null(), &mut out), FdaStatus::NullPointer);
            assert_eq!(fda_train(ptr::null(), ptr::null(), &mut ptr::null_mut()), FdaStatus::NullPointer);
            assert!(!last_error().is_empty());
        }
    }

    #[test]
    fn missing_directory_reports_io_error() {
        let dir = CString::new("/nonexistent/fda-dataset").unwrap();
        let mut out = ptr::null_mut();
        let st = unsafe { fda_dataset_load(dir.as_ptr(), &mut out) };
        assert_eq!(st, FdaStatus::Io);
        assert!(last_error().contains("nonexistent"));
    }

    #[test]
    fn synthetic_dataset_reports_shape() {
        let ds = synthetic();
        unsafe {
            assert!(fda_dataset_num_users(ds) > 0);
            assert!(fda_dataset_num_items(ds) > 0);
            assert_eq!(fda_dataset_num_users(ptr::null()), 0);
            fda_dataset_free(ds);
        }
    }

    #[test]
    fn bad_config_json_is_invalid_argument() {
        let ds = synthetic();
        let cfg = CString::new(r#"{"epochz": 3}"#).unwrap();
        let mut model = ptr::null_mut();
        let st = unsafe { fda_train(ds, cfg.as_ptr(), &mut model) };
        assert_eq!(st, FdaStatus::InvalidArgument);
        unsafe { fda_dataset_free(ds) };
    }

    #[test]
    fn train_score_evaluate_round_trip() {
        let ds = synthetic();
        let model = quick_train(ds, "");
        unsafe {
            let mut score = f64::NAN;
            assert_eq!(fda_model_score(model, 0, 0, &mut score), FdaStatus::Ok);
            assert!(score.is_finite());
            let mut out_of_range = f64::NAN;
            assert_eq!(
                fda_model_score(model, usize::MAX, 0, &mut out_of_range),
                FdaStatus::InvalidArgument
            );

            let mut m = FdaMetrics {
                hit_ratio: -1.0,
                ndcg: -1.0,
                demographic_parity: -1.0,
                equal_opportunity: -1.0,
            };
            assert_eq!(fda_evaluate(model, ds, 5, &mut m), FdaStatus::Ok);
            for v in [m.hit_ratio, m.ndcg, m.demographic_parity, m.equal_opportunity] {
                assert!((0.0..=1.0).contains(&v), "metric out of range: {v}");
            }
            assert_eq!(fda_evaluate(model, ds, 0, &mut m), FdaStatus::InvalidArgument);
            fda_model_free(model);
            fda_dataset_free(ds);
        }
    }

    #[test]
    fn evaluation_matches_core_library() {
        let ds_handle = synthetic();
        let model = quick_train(ds_handle, "");
        unsafe {
            let dataset = &(*ds_handle).inner;
            let expected = report::evaluate_table(&(*model).table, dataset, &[5], 1).unwrap();
            let mut m = FdaMetrics {
                hit_ratio: 0.0,
                ndcg: 0.0,
                demographic_parity: 0.0,
                equal_opportunity: 0.0,
            };
            assert_eq!(fda_evaluate(model, ds_handle, 5, &mut m), FdaStatus::Ok);
            assert_eq!(m.hit_ratio, expected[0].hr);
            assert_eq!(m.ndcg, expected[0].ndcg);
            assert_eq!(m.demographic_parity, expected[0].dp);
            assert_eq!(m.equal_opportunity, expected[0].eo);
            fda_model_free(model);
            fda_dataset_free(ds_handle);
        }
    }

    #[test]
    fn checkpoint_round_trip_through_ffi() {
        use fda_core::synth::{planted_skew, SynthConfig};
        use fda_core::trainer::TrainConfig;

        let ds = planted_skew(&SynthConfig::directional(), 7);
        let cfg = TrainConfig {
            dim: 8,
            epochs: 3,
            warmup_epochs: 1,
            eval_every: 3,
            batch_size: 64,
            k_list: vec![5],
            ..Default::default()
        };
        let mut trainer = Trainer::new(&ds, cfg).unwrap();
        trainer.run_to_end().unwrap();
        let dir = tempfile::tempdir().unwrap();
        checkpoint::save(dir.path(), &trainer.to_checkpoint()).unwrap();

        let path = CString::new(dir.path().to_str().unwrap()).unwrap();
        let mut model = ptr::null_mut();
        let st = unsafe { fda_model_load(path.as_ptr(), &mut model) };
        assert_eq!(st, FdaStatus::Ok, "{}", last_error());
        unsafe {
            assert_eq!((*model).table, trainer.table);
            fda_model_free(model);
        }
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(fda_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }
}
