//! C ABI over the alforge engine.
//!
//! Every fallible function returns an [`AlStatus`]; on failure the message
//! is available from [`al_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their matching `_free` function.
//! Panics never cross the boundary; they surface as `AL_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use alforge::acquisition::compute_quotas;
use alforge::driver::{cost_per_accuracy, run_experiment};
use alforge::{kmeans_fit, ClusterModel, Dataset, Error, ErrorKind, KMeansConfig, RunConfig};
use ndarray::ArrayView2;

/// Status codes returned by every fallible call.
#[allow(non_camel_case_types)]
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlStatus {
    AL_OK = 0,
    /// Bad arguments or configuration.
    AL_ERR_USAGE = 2,
    /// Malformed or inconsistent data.
    AL_ERR_DATA = 3,
    /// Non-finite values or numeric failure.
    AL_ERR_NUMERIC = 4,
    /// A required pointer was null.
    AL_ERR_NULL = 5,
    /// Internal panic caught at the boundary.
    AL_ERR_PANIC = 6,
}

/// Opaque dataset handle.
pub struct AlDataset(Dataset);

/// Opaque fitted k-means model.
pub struct AlClusterModel(ClusterModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(err: Error) -> AlStatus {
    set_error(err.to_string());
    match err.kind() {
        ErrorKind::Usage => AlStatus::AL_ERR_USAGE,
        ErrorKind::Data => AlStatus::AL_ERR_DATA,
        ErrorKind::Numeric => AlStatus::AL_ERR_NUMERIC,
    }
}

fn null(what: &str) -> AlStatus {
    set_error(format!("null pointer: {what}"));
    AlStatus::AL_ERR_NULL
}

fn guard(f: impl FnOnce() -> AlStatus) -> AlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == AlStatus::AL_OK {
                set_error("");
            }
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AlStatus::AL_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AlStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        AlStatus::AL_ERR_USAGE
    })
}

/// Message for the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn al_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn al_dataset_load(path: *const c_char, out: *mut *mut AlDataset) -> AlStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Dataset::read(path) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(AlDataset(ds)));
                AlStatus::AL_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle from `al_dataset_load`.
#[no_mangle]
pub unsafe extern "C" fn al_dataset_len(ds: *const AlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Feature dimension; 0 for a null handle.
///
/// # Safety
/// As for `al_dataset_len`.
#[no_mangle]
pub unsafe extern "C" fn al_dataset_dim(ds: *const AlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

/// Number of iD classes; 0 for a null handle.
///
/// # Safety
/// As for `al_dataset_len`.
#[no_mangle]
pub unsafe extern "C" fn al_dataset_classes(ds: *const AlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.classes())
}

/// # Safety
/// `ds` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn al_dataset_free(ds: *mut AlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Annotation cost per accuracy point, rounded to two decimals.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn al_cost_per_accuracy(cost: usize, accuracy: f64, out: *mut f64) -> AlStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match cost_per_accuracy(cost, accuracy) {
            Ok(v) => {
                *out = v;
                AlStatus::AL_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Largest-remainder split of `batch` over clusters of the given sizes.
///
/// # Safety
/// `sizes` and `out` must each point to `n` elements.
#[no_mangle]
pub unsafe extern "C" fn al_compute_quotas(
    sizes: *const usize,
    n: usize,
    batch: usize,
    out: *mut usize,
) -> AlStatus {
    guard(|| {
        if sizes.is_null() || out.is_null() {
            return null("sizes/out");
        }
        let sizes = std::slice::from_raw_parts(sizes, n);
        match compute_quotas(sizes, batch) {
            Ok(q) => {
                std::slice::from_raw_parts_mut(out, n).copy_from_slice(&q);
                AlStatus::AL_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Fits k-means (k-means++ seeding, Lloyd iterations) to `n` row-major
/// points of dimension `dim`. Row `i` gets sample id `i`.
///
/// # Safety
/// `points` must hold `n * dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn al_kmeans_fit(
    points: *const f64,
    n: usize,
    dim: usize,
    k: usize,
    seed: u64,
    out: *mut *mut AlClusterModel,
) -> AlStatus {
    guard(|| {
        if points.is_null() || out.is_null() {
            return null("points/out");
        }
        let Some(len) = n.checked_mul(dim) else {
            set_error("n * dim overflows");
            return AlStatus::AL_ERR_USAGE;
        };
        let data = std::slice::from_raw_parts(points, len);
        let view = match ArrayView2::from_shape((n, dim), data) {
            Ok(v) => v,
            Err(e) => {
                set_error(e.to_string());
                return AlStatus::AL_ERR_USAGE;
            }
        };
        let ids: Vec<usize> = (0..n).collect();
        match kmeans_fit(&ids, view, k, seed, &KMeansConfig::default()) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(AlClusterModel(m)));
                AlStatus::AL_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of clusters; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn al_cluster_model_k(model: *const AlClusterModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.k())
}

/// Sum of squared distances to the assigned centroids; NaN for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn al_cluster_model_objective(model: *const AlClusterModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.objective())
}

/// Copies the cluster index of every fitted point into `out`.
///
/// # Safety
/// `out` must hold `len` elements; `len` must equal the fitted point count.
#[no_mangle]
pub unsafe extern "C" fn al_cluster_model_assignments(
    model: *const AlClusterModel,
    out: *mut usize,
    len: usize,
) -> AlStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return null("model") };
        if out.is_null() {
            return null("out");
        }
        let a = m.0.assignments();
        if a.len() != len {
            set_error(format!("model holds {} points, buffer has {len}", a.len()));
            return AlStatus::AL_ERR_USAGE;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(a);
        AlStatus::AL_OK
    })
}

/// Copies the `k * dim` row-major centroids into `out`.
///
/// # Safety
/// `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn al_cluster_model_centroids(
    model: *const AlClusterModel,
    out: *mut f64,
    len: usize,
) -> AlStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return null("model") };
        if out.is_null() {
            return null("out");
        }
        let c = m.0.centroids();
        if c.len() != len {
            set_error(format!("model has {} centroid values, buffer has {len}", c.len()));
            return AlStatus::AL_ERR_USAGE;
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, s) in dst.iter_mut().zip(c.iter()) {
            *d = *s;
        }
        AlStatus::AL_OK
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn al_cluster_model_free(model: *mut AlClusterModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs one experiment described by config text (same format as the CLI
/// config file). On success `*summary_json` receives the run summary as a
/// JSON string, to be released with `al_string_free`; `*metrics_csv`, when
/// non-null, receives the per-stage metrics CSV.
///
/// # Safety
/// `config` must be a NUL-terminated string; `summary_json` must be
/// writable; `metrics_csv` may be null.
#[no_mangle]
pub unsafe extern "C" fn al_run_experiment(
    config: *const c_char,
    summary_json: *mut *mut c_char,
    metrics_csv: *mut *mut c_char,
) -> AlStatus {
    guard(|| {
        if summary_json.is_null() {
            return null("summary_json");
        }
        let text = match str_arg(config, "config") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let report = RunConfig::parse(text).and_then(|cfg| {
            cfg.validate()?;
            let data = cfg.load_data()?;
            run_experiment(&data, &cfg.experiment)
        });
        match report {
            Ok(r) => {
                *summary_json = to_c(r.summary().to_json());
                if !metrics_csv.is_null() {
                    *metrics_csv = to_c(r.csv());
                }
                AlStatus::AL_OK
            }
            Err(e) => fail(e),
        }
    })
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn al_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
