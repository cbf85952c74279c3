//! C ABI for the `handa` library.
//!
//! Objects cross the boundary as opaque handles created by `handa_*_new`,
//! `handa_*_load` or `handa_train*` and released by the matching
//! `handa_*_free`. Every fallible function returns a [`HandaStatus`]; on
//! failure `handa_last_error()` describes the most recent error on the calling
//! thread. Feature matrices are passed row-major with one sample per row.
//! Panics never cross the boundary; they are reported as
//! `HANDA_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use handa::data::{load_dense, load_sparse, make_synthetic, DomainDataset, SplitSpec, SyntheticSpec};
use handa::experiment::{evaluate, Experiment};
use handa::numerics::Matrix;
use handa::trainer::{train, ModelState, TrainConfig};
use handa::{ErrorKind, HandaError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandaStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, bad size or a violated precondition.
    InvalidArgument = 1,
    /// Unreadable or malformed input data.
    DataError = 2,
    /// Training produced a non-finite value.
    NumericError = 3,
    /// Internal panic; the handle arguments should be considered unusable.
    Panic = 4,
}

/// A feature matrix with optional labels.
pub struct HandaDataset {
    inner: DomainDataset,
}

/// A source/target pair split into labeled, unlabeled and test target parts.
pub struct HandaExperiment {
    inner: Experiment,
}

/// Training options.
pub struct HandaConfig {
    inner: TrainConfig,
}

/// A trained model.
pub struct HandaModel {
    inner: ModelState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(HandaStatus, String);

impl From<HandaError> for Failure {
    fn from(e: HandaError) -> Self {
        let status = match e.kind() {
            ErrorKind::Contract => HandaStatus::InvalidArgument,
            ErrorKind::Data => HandaStatus::DataError,
            ErrorKind::Numeric => HandaStatus::NumericError,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(HandaStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HandaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HandaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HandaStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(format!("{what} is null")))
}

fn out_ptr<T>(p: *mut *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(invalid(format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn handa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn handa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- datasets

/// Builds a dataset from `n` row-major samples of dimension `dim`. `labels`
/// may be NULL for unlabeled data; otherwise it holds `n` class indices.
///
/// # Safety
/// `features` must point to `n * dim` doubles and `labels`, when non-NULL, to
/// `n` values. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn handa_dataset_new(
    features: *const f64,
    n: usize,
    dim: usize,
    labels: *const usize,
    out: *mut *mut HandaDataset,
) -> HandaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if features.is_null() {
            return Err(invalid("features is null"));
        }
        if n == 0 || dim == 0 {
            return Err(invalid("dataset needs at least one sample and one feature"));
        }
        let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
        let rows = std::slice::from_raw_parts(features, len);
        let x = Matrix::from_vec(n, dim, rows.to_vec())?.transpose();
        let inner = if labels.is_null() {
            DomainDataset::unlabeled("ffi", x)?
        } else {
            DomainDataset::labeled("ffi", x, std::slice::from_raw_parts(labels, n).to_vec())?
        };
        put(out, HandaDataset { inner });
        Ok(())
    })
}

/// Loads a labeled dataset. `sparse` selects the "label idx:val" format;
/// otherwise "label,f1,...,fm" CSV rows are expected.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn handa_dataset_load(
    path: *const c_char,
    sparse: bool,
    out: *mut *mut HandaDataset,
) -> HandaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = if sparse {
            load_sparse(path)?
        } else {
            load_dense(path, true)?
        };
        put(out, HandaDataset { inner });
        Ok(())
    })
}

/// Generates a synthetic heterogeneous pair. The remaining generator options
/// keep their library defaults.
///
/// # Safety
/// `out_source` and `out_target` must be writable.
#[no_mangle]
pub unsafe extern "C" fn handa_dataset_synthetic(
    classes: usize,
    m_s: usize,
    m_t: usize,
    n_per_class: usize,
    seed: u64,
    out_source: *mut *mut HandaDataset,
    out_target: *mut *mut HandaDataset,
) -> HandaStatus {
    guard(|| {
        out_ptr(out_source, "out_source")?;
        out_ptr(out_target, "out_target")?;
        let spec = SyntheticSpec {
            classes,
            m_s,
            m_t,
            n_per_class,
            seed,
            ..SyntheticSpec::default()
        };
        let (s, t) = make_synthetic(&spec)?;
        put(out_source, HandaDataset { inner: s });
        put(out_target, HandaDataset { inner: t });
        Ok(())
    })
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn handa_dataset_len(ds: *const HandaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Feature dimension, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn handa_dataset_dim(ds: *const HandaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dim())
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn handa_dataset_free(ds: *mut HandaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ---------------------------------------------------------------- config

/// Default training options.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn handa_config_new(out: *mut *mut HandaConfig) -> HandaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        put(out, HandaConfig { inner: TrainConfig::default() });
        Ok(())
    })
}

/// Options from TOML text; absent keys keep their defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn handa_config_from_toml(
    text: *const c_char,
    out: *mut *mut HandaConfig,
) -> HandaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let text = str_arg(text, "text")?;
        let inner: TrainConfig =
            toml::from_str(text).map_err(|e| invalid(format!("bad config: {}", e.message())))?;
        inner.validate()?;
        put(out, HandaConfig { inner });
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn handa_config_free(cfg: *mut HandaConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---------------------------------------------------------------- training

unsafe fn config_or_default(cfg: *const HandaConfig) -> TrainConfig {
    cfg.as_ref().map_or_else(TrainConfig::default, |c| c.inner.clone())
}

/// Splits `target` into labeled, unlabeled and test parts and standardizes
/// each domain when `standardize` is set.
///
/// # Safety
/// `source` and `target` must be live dataset handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn handa_experiment_new(
    source: *const HandaDataset,
    target: *const HandaDataset,
    labeled_per_class: usize,
    seed: u64,
    standardize: bool,
    out: *mut *mut HandaExperiment,
) -> HandaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let s = borrow(source, "source")?;
        let t = borrow(target, "target")?;
        let inner = Experiment::prepare(
            &s.inner,
            &t.inner,
            &SplitSpec::new(labeled_per_class, seed),
            standardize,
        )?;
        put(out, HandaExperiment { inner });
        Ok(())
    })
}

/// Size of the held-out target test part, or 0 for NULL.
///
/// # Safety
/// `exp` must be NULL or a live experiment handle.
#[no_mangle]
pub unsafe extern "C" fn handa_experiment_test_len(exp: *const HandaExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.inner.test.len())
}

/// # Safety
/// `exp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn handa_experiment_free(exp: *mut HandaExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Trains on an experiment. `cfg` may be NULL for the defaults.
///
/// # Safety
/// `exp` must be a live experiment handle, `cfg` NULL or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn handa_train_experiment(
    exp: *const HandaExperiment,
    cfg: *const HandaConfig,
    out: *mut *mut HandaModel,
) -> HandaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let e = &borrow(exp, "exp")?.inner;
        let inner = train(&e.source, &e.labeled, &e.unlabeled, &config_or_default(cfg))?;
        put(out, HandaModel { inner });
        Ok(())
    })
}

/// Trains on explicit parts. `target_unlabeled` may carry labels; they are
/// ignored.
///
/// # Safety
/// The three datasets must be live handles, `cfg` NULL or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn handa_train(
    source: *const HandaDataset,
    target_labeled: *const HandaDataset,
    target_unlabeled: *const HandaDataset,
    cfg: *const HandaConfig,
    out: *mut *mut HandaModel,
) -> HandaStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let s = &borrow(source, "source")?.inner;
        let l = &borrow(target_labeled, "target_labeled")?.inner;
        let u = borrow(target_unlabeled, "target_unlabeled")?.inner.without_labels();
        let inner = train(s, l, &u, &config_or_default(cfg))?;
        put(out, HandaModel { inner });
        Ok(())
    })
}

/// Test-split accuracy of `model` on `exp`.
///
/// # Safety
/// `model` and `exp` must be live handles and `accuracy` writable.
#[no_mangle]
pub unsafe extern "C" fn handa_model_evaluate(
    model: *const HandaModel,
    exp: *const HandaExperiment,
    accuracy: *mut f64,
) -> HandaStatus {
    guard(|| {
        if accuracy.is_null() {
            return Err(invalid("accuracy is null"));
        }
        let m = borrow(model, "model")?;
        let e = borrow(exp, "exp")?;
        let (metrics, _) = evaluate(&m.inner, &e.inner, "ffi")?;
        *accuracy = metrics.accuracy;
        Ok(())
    })
}

/// Predicts target-domain labels into `labels`, which holds `len` entries and
/// must match the dataset's sample count.
///
/// # Safety
/// `model` and `target` must be live handles and `labels` must point to `len`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn handa_model_predict_target(
    model: *const HandaModel,
    target: *const HandaDataset,
    labels: *mut usize,
    len: usize,
) -> HandaStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let t = borrow(target, "target")?;
        if labels.is_null() {
            return Err(invalid("labels is null"));
        }
        if len != t.inner.len() {
            return Err(invalid(format!(
                "labels holds {len} entries for {} samples",
                t.inner.len()
            )));
        }
        let (pred, _) = m.inner.predict_target(t.inner.features())?;
        std::slice::from_raw_parts_mut(labels, len).copy_from_slice(&pred);
        Ok(())
    })
}

/// Outer iterations run, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn handa_model_iterations(model: *const HandaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.traces.len())
}

/// Writes the convergence iteration to `iter` and returns true, or returns
/// false when training hit the iteration budget (or `model` is NULL).
///
/// # Safety
/// `model` must be NULL or live; `iter` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn handa_model_converged_at(model: *const HandaModel, iter: *mut usize) -> bool {
    match model.as_ref().and_then(|m| m.inner.converged_at) {
        Some(i) => {
            if !iter.is_null() {
                *iter = i;
            }
            true
        }
        None => false,
    }
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn handa_model_free(model: *mut HandaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
