//! C interface: load trained models and ensembles, run predictions, and
//! query the weighting and consistency helpers.
//!
//! Every fallible function returns an [`EfStatus`]. On failure a message is
//! stored per thread and can be read with [`ef_last_error`] until the next
//! failing call on that thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ensemblefit::ensemble::{load_ensemble, reciprocal_weights, EnsembleModel};
use ensemblefit::monitor::{empirical_epsilon, first_stable_epoch, ConsistencyCriterion};
use ensemblefit::nn::{load_model, LayeredModel};
use ensemblefit::transfer::TrainingHistory;
use ensemblefit::{Error, Tensor};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Panic = 6,
}

/// A single trained network.
pub struct EfModel(LayeredModel);

/// A loaded ensemble with its combination mode and threshold.
pub struct EfEnsemble(EnsembleModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EfStatus {
    match err {
        Error::Shape(_) => EfStatus::Shape,
        Error::InvalidArgument(_) | Error::BackwardBeforeForward => EfStatus::InvalidArgument,
        Error::Io { .. } => EfStatus::Io,
        Error::VersionMismatch { .. } | Error::Format(_) | Error::Json(_) | Error::Csv(_) => EfStatus::Format,
    }
}

struct Fail(EfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EfStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(EfStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_out<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn history_of(val_losses: &[f64]) -> TrainingHistory {
    let mut h = TrainingHistory::default();
    for &v in val_losses {
        h.push(v, v, 0.0, 0.0);
    }
    h
}

unsafe fn write_shape(shape: [usize; 3], out: *mut usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out_shape"));
    }
    std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&shape);
    Ok(())
}

unsafe fn predict_into(
    shape: [usize; 3],
    pixels: *const f64,
    n_items: usize,
    out_probs: *mut f64,
    run: impl FnOnce(&Tensor) -> ensemblefit::Result<Tensor>,
) -> Result<(), Fail> {
    let per_item: usize = shape.iter().product();
    let input = slice_arg(pixels, n_items * per_item, "pixels")?;
    let out = slice_out(out_probs, n_items, "out_probs")?;
    if n_items == 0 {
        return Ok(());
    }
    let x = Tensor::new(vec![n_items, shape[0], shape[1], shape[2]], input.to_vec())?;
    out.copy_from_slice(run(&x)?.values());
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ef_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ef_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ef_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file. On success `*out` owns a handle to free with
/// [`ef_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ef_model_load(path: *const c_char, out: *mut *mut EfModel) -> EfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_model(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(EfModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`ef_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ef_model_free(model: *mut EfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the expected `[channels, height, width]` into `out_shape[0..3]`.
///
/// # Safety
/// `model` must be a live handle and `out_shape` must hold three values.
#[no_mangle]
pub unsafe extern "C" fn ef_model_input_shape(model: *const EfModel, out_shape: *mut usize) -> EfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write_shape(m.0.input_shape(), out_shape)
    })
}

/// Defect probabilities for `n_items` images stored contiguously in
/// channel, row, column order.
///
/// # Safety
/// `pixels` must hold `n_items * c * h * w` values and `out_probs` `n_items`.
#[no_mangle]
pub unsafe extern "C" fn ef_model_predict(
    model: *const EfModel,
    pixels: *const f64,
    n_items: usize,
    out_probs: *mut f64,
) -> EfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        predict_into(m.0.input_shape(), pixels, n_items, out_probs, |x| m.0.forward(x))
    })
}

/// Loads an ensemble manifest and its member models.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ef_ensemble_load(path: *const c_char, out: *mut *mut EfEnsemble) -> EfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ensemble = load_ensemble(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(EfEnsemble(ensemble)));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must come from [`ef_ensemble_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ef_ensemble_free(ensemble: *mut EfEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Number of members, or zero for a null handle.
///
/// # Safety
/// `ensemble` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ef_ensemble_len(ensemble: *const EfEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.0.len())
}

/// # Safety
/// `ensemble` must be a live handle and `out_shape` must hold three values.
#[no_mangle]
pub unsafe extern "C" fn ef_ensemble_input_shape(ensemble: *const EfEnsemble, out_shape: *mut usize) -> EfStatus {
    guard(|| {
        let e = ensemble.as_ref().ok_or_else(|| null("ensemble"))?;
        write_shape(e.0.expected_shape, out_shape)
    })
}

/// Combined defect probabilities under the ensemble's mode.
///
/// # Safety
/// Same layout rules as [`ef_model_predict`].
#[no_mangle]
pub unsafe extern "C" fn ef_ensemble_predict(
    ensemble: *const EfEnsemble,
    pixels: *const f64,
    n_items: usize,
    out_probs: *mut f64,
) -> EfStatus {
    guard(|| {
        let e = ensemble.as_ref().ok_or_else(|| null("ensemble"))?;
        predict_into(e.0.expected_shape, pixels, n_items, out_probs, |x| e.0.predict(x))
    })
}

/// Decision threshold stored with the ensemble.
///
/// # Safety
/// `ensemble` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ef_ensemble_threshold(ensemble: *const EfEnsemble, out: *mut f64) -> EfStatus {
    guard(|| {
        let e = ensemble.as_ref().ok_or_else(|| null("ensemble"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = e.0.threshold;
        Ok(())
    })
}

/// Normalized inverse-loss weights.
///
/// # Safety
/// `losses` and `out_weights` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ef_reciprocal_weights(losses: *const f64, n: usize, out_weights: *mut f64) -> EfStatus {
    guard(|| {
        let w = reciprocal_weights(slice_arg(losses, n, "losses")?)?;
        slice_out(out_weights, n, "out_weights")?.copy_from_slice(&w);
        Ok(())
    })
}

/// First epoch after which `window` successive validation-loss changes stay
/// within `epsilon`; `*out_epoch` is -1 when the curve never settles.
///
/// # Safety
/// `val_losses` must hold `n` values and `out_epoch` be writable.
#[no_mangle]
pub unsafe extern "C" fn ef_first_stable_epoch(
    val_losses: *const f64,
    n: usize,
    epsilon: f64,
    window: usize,
    out_epoch: *mut i64,
) -> EfStatus {
    guard(|| {
        let h = history_of(slice_arg(val_losses, n, "val_losses")?);
        let criterion = ConsistencyCriterion::new(epsilon, window)?;
        let epoch = first_stable_epoch(&h, &criterion)?;
        let out = out_epoch.as_mut().ok_or_else(|| null("out_epoch"))?;
        *out = epoch.map_or(-1, |e| e as i64);
        Ok(())
    })
}

/// Largest validation-loss change over the last `tail` epoch transitions.
///
/// # Safety
/// `val_losses` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ef_empirical_epsilon(
    val_losses: *const f64,
    n: usize,
    tail: usize,
    out: *mut f64,
) -> EfStatus {
    guard(|| {
        let h = history_of(slice_arg(val_losses, n, "val_losses")?);
        let eps = empirical_epsilon(&h, tail)?;
        *out.as_mut().ok_or_else(|| null("out"))? = eps;
        Ok(())
    })
}
