//! C ABI over the `robust-ensemble` crate.
//!
//! Every fallible function returns a [`ReStatus`] and writes its result
//! through an out pointer. On failure a message is kept per thread and can
//! be read with [`re_last_error`]. Panics never cross the boundary; they are
//! reported as [`ReStatus::Panic`].
//!
//! Models are opaque: create one with [`re_model_open`] or
//! [`re_model_init`], release it with [`re_model_free`]. A handle may be
//! shared between threads for concurrent prediction.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use robust_ensemble::assignor::{kl_lognormal, AssignorError};
use robust_ensemble::config::RunConfig;
use robust_ensemble::detector::DetectorError;
use robust_ensemble::eval::{ensemble_bound, single_bound};
use robust_ensemble::matrix::{aggregate_uniform, aggregate_weighted, classify, DecisionConfig};
use robust_ensemble::model::{EnsembleModel, Pipeline};
use robust_ensemble::paraphrase::Paraphraser;
use robust_ensemble::prior::LogNormalParams;
use robust_ensemble::{Error, PredictionMatrix, WeightMatrix};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad argument or input data (shape, range, config contents).
    Invalid = 3,
    /// A file could not be read or parsed.
    Io = 4,
    /// The computation itself failed.
    Runtime = 5,
    Panic = 6,
}

/// Opaque model handle: detectors, assignor, paraphraser and inference
/// settings.
pub struct ReModel {
    model: EnsembleModel,
    generator: Box<dyn Paraphraser>,
    config: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ReStatus {
    match e {
        Error::Io { .. } | Error::Detector(DetectorError::Checkpoint(_)) | Error::Assignor(AssignorError::Checkpoint(_)) => {
            ReStatus::Io
        }
        // matrices always come from the caller here
        Error::Matrix(_) => ReStatus::Invalid,
        e if e.is_validation() => ReStatus::Invalid,
        _ => ReStatus::Runtime,
    }
}

struct Failure(ReStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(ReStatus::Invalid, message.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ReStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ReStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {message}"));
            ReStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(ReStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| Failure(ReStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn read_matrix(p: *const f64, rows: usize, cols: usize) -> Result<PredictionMatrix, Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| invalid("matrix size overflows"))?;
    let values = read_slice(p, len, "probabilities")?;
    PredictionMatrix::new(rows, cols, values.to_vec()).map_err(|e| Error::from(e).into())
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. The pointer stays valid until the next call into this
/// library on the same thread.
#[no_mangle]
pub extern "C" fn re_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn re_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Uniform mean of a row-major `rows x cols` probability matrix
/// (detectors by samples).
///
/// # Safety
/// `probabilities` must point to `rows * cols` readable doubles and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn re_aggregate_uniform(
    probabilities: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = read_matrix(probabilities, rows, cols)?;
        *out = aggregate_uniform(&p);
        Ok(())
    })
}

/// Weighted mean of a probability matrix with a non-negative weight matrix
/// of the same shape. Weights need not be normalized.
///
/// # Safety
/// Both matrices must point to `rows * cols` readable doubles and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn re_aggregate_weighted(
    probabilities: *const f64,
    weights: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = read_matrix(probabilities, rows, cols)?;
        let w = read_slice(weights, rows * cols, "weights")?;
        let w = WeightMatrix::new(rows, cols, w.to_vec()).map_err(Error::from)?;
        *out = aggregate_weighted(&p, &w).map_err(Error::from)?;
        Ok(())
    })
}

/// Label for an aggregated probability: 1 (harmful) when `p_bar > epsilon`,
/// else 0.
///
/// # Safety
/// `out_label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn re_classify(p_bar: f64, epsilon: f64, out_label: *mut u8) -> ReStatus {
    guard(|| {
        non_null(out_label, "out_label")?;
        if !(0.0..=1.0).contains(&p_bar) {
            return Err(invalid(format!("probability {p_bar} outside [0, 1]")));
        }
        let decision = DecisionConfig::new(epsilon).map_err(Error::from)?;
        *out_label = classify(p_bar, decision).as_u8();
        Ok(())
    })
}

/// Lower bound on the probability of a correct decision for one detector
/// with prediction variance `sigma0_sq`, `generated` paraphrases plus the
/// original input, and margin `delta`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn re_single_bound(sigma0_sq: f64, generated: usize, delta: f64, out: *mut f64) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        check_bound_args(&[sigma0_sq], delta)?;
        *out = single_bound(sigma0_sq, generated, delta);
        Ok(())
    })
}

/// Ensemble counterpart of [`re_single_bound`] for `detectors` variances.
///
/// # Safety
/// `sigma_sq` must point to `detectors` readable doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn re_ensemble_bound(
    sigma_sq: *const f64,
    detectors: usize,
    generated: usize,
    delta: f64,
    out: *mut f64,
) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        let s = read_slice(sigma_sq, detectors, "sigma_sq")?;
        if s.is_empty() {
            return Err(invalid("at least one detector variance is required"));
        }
        check_bound_args(s, delta)?;
        *out = ensemble_bound(s, generated, delta);
        Ok(())
    })
}

fn check_bound_args(variances: &[f64], delta: f64) -> Result<(), Failure> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(invalid(format!("variance must be non-negative, got {v}")));
    }
    Ok(())
}

/// KL divergence between two log-normals given by the mean and variance of
/// their underlying Gaussians.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn re_kl_lognormal(
    q_mean: f64,
    q_variance: f64,
    p_mean: f64,
    p_variance: f64,
    out: *mut f64,
) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        let q = LogNormalParams::new(q_mean, q_variance).map_err(Error::from)?;
        let p = LogNormalParams::new(p_mean, p_variance).map_err(Error::from)?;
        *out = kl_lognormal(&q, &p);
        Ok(())
    })
}

unsafe fn read_config(config_path: *const c_char) -> Result<RunConfig, Failure> {
    let cfg = if config_path.is_null() {
        RunConfig::default()
    } else {
        RunConfig::from_path(Path::new(read_str(config_path, "config_path")?))?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn build(model: EnsembleModel, config: RunConfig) -> Result<*mut ReModel, Failure> {
    let generator = config.generator.build(config.generator.load_lexicon()?);
    Ok(Box::into_raw(Box::new(ReModel { model, generator, config })))
}

/// Loads a trained checkpoint directory. `config_path` names a JSON run
/// configuration and may be NULL for defaults.
///
/// # Safety
/// `checkpoint_dir` must be a NUL-terminated string, `config_path` NULL or
/// NUL-terminated, and `out` writable. The handle written to `out` must be
/// released with [`re_model_free`].
#[no_mangle]
pub unsafe extern "C" fn re_model_open(
    checkpoint_dir: *const c_char,
    config_path: *const c_char,
    out: *mut *mut ReModel,
) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let dir = read_str(checkpoint_dir, "checkpoint_dir")?;
        let config = read_config(config_path)?;
        let model = EnsembleModel::load(Path::new(dir))?;
        *out = build(model, config)?;
        Ok(())
    })
}

/// Creates an untrained model with `detectors` zero-weight detectors. Its
/// every prediction is 0.5.
///
/// # Safety
/// `config_path` must be NULL or NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn re_model_init(
    detectors: usize,
    config_path: *const c_char,
    out: *mut *mut ReModel,
) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let mut config = read_config(config_path)?;
        if detectors == 0 {
            return Err(invalid("detectors must be at least 1"));
        }
        config.detectors = detectors;
        let model = EnsembleModel::init(detectors, config.feature_dim, config.assignor, config.seed);
        *out = build(model, config)?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn re_model_free(model: *mut ReModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of base detectors in the model, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn re_model_detectors(model: *const ReModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.detectors.len())
}

/// Scores `text`: the aggregated harmful probability and its label.
///
/// # Safety
/// `model` must be a live handle, `text` NUL-terminated, and both out
/// pointers writable.
#[no_mangle]
pub unsafe extern "C" fn re_model_predict(
    model: *const ReModel,
    text: *const c_char,
    out_probability: *mut f64,
    out_label: *mut u8,
) -> ReStatus {
    guard(|| {
        non_null(out_probability, "out_probability")?;
        non_null(out_label, "out_label")?;
        let m = model.as_ref().ok_or_else(|| Failure(ReStatus::NullPointer, "model is null".into()))?;
        let text = read_str(text, "text")?;
        let verdict = Pipeline::new(&m.model, m.generator.as_ref(), m.config.inference()).verdict(text)?;
        *out_probability = verdict.probability;
        *out_label = verdict.label.as_u8();
        Ok(())
    })
}

/// Full verdict for `text` as a JSON object, the same shape the `predict`
/// command prints. Free the string with [`re_string_free`].
///
/// # Safety
/// `model` must be a live handle, `text` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn re_model_predict_json(
    model: *const ReModel,
    text: *const c_char,
    out: *mut *mut c_char,
) -> ReStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| Failure(ReStatus::NullPointer, "model is null".into()))?;
        let text = read_str(text, "text")?;
        let verdict = Pipeline::new(&m.model, m.generator.as_ref(), m.config.inference()).verdict(text)?;
        let json = serde_json::to_string(&verdict).expect("serializable");
        *out = CString::new(json).expect("json has no nul bytes").into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn re_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
