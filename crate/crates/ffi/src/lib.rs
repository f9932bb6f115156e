//! C ABI over the linkage-attack core.
//!
//! Every function returns an [`ElkStatus`]. On failure the message is kept
//! per thread and can be read with [`elk_last_error`]. Models are opaque
//! handles owned by the caller and released with [`elk_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use ecg_linkage::attack::{calibrate_threshold, stage1_match, stage2_decide, Decision, ThresholdPolicy};
use ecg_linkage::data::verify_bundle;
use ecg_linkage::metrics;
use ecg_linkage::model::checkpoint::Checkpoint;
use ecg_linkage::model::{Classifier, Model};
use ecg_linkage::signal::{self, EcgRecord};
use ecg_linkage::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElkStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    InvalidArgument = 1,
    /// Bad parameter or configuration value.
    Parameter = 2,
    /// Malformed input data, including length mismatches.
    Input = 3,
    Numerical = 4,
    Calibration = 5,
    Metric = 6,
    Checkpoint = 7,
    /// A run bundle failed hash verification.
    Integrity = 8,
    Io = 9,
    /// The caller's output buffer is too small.
    BufferTooSmall = 10,
    /// A bug inside the library; the message has details.
    Internal = 11,
}

/// A loaded classifier.
pub struct ElkModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> ElkStatus {
    match err {
        Error::Parameter(_) | Error::Config(_) | Error::Schedule { .. } => ElkStatus::Parameter,
        Error::Dimension { .. } | Error::Label { .. } | Error::Input(_) | Error::Ingest { .. } | Error::LabelCollision { .. } => {
            ElkStatus::Input
        }
        Error::Numerical(_) => ElkStatus::Numerical,
        Error::Calibration(_) => ElkStatus::Calibration,
        Error::Metric(_) => ElkStatus::Metric,
        Error::Checkpoint(_) | Error::Json(_) => ElkStatus::Checkpoint,
        Error::Integrity(_) => ElkStatus::Integrity,
        Error::Io { .. } => ElkStatus::Io,
    }
}

struct Fail(ElkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(ElkStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ElkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ElkStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ElkStatus::Internal
        }
    }
}

unsafe fn input<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn output<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(invalid("path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Message of the last failed call on this thread, or null after a
/// success. The pointer stays valid until the next call on the thread.
#[no_mangle]
pub extern "C" fn elk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn elk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elk_model_load(path_: *const c_char, out: *mut *mut ElkModel) -> ElkStatus {
    guard(|| {
        let out = output(out, "out")?;
        *out = ptr::null_mut();
        let ckpt = Checkpoint::load(path(path_)?)?;
        *out = Box::into_raw(Box::new(ElkModel { model: ckpt.model }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`elk_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn elk_model_free(model: *mut ElkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elk_model_num_classes(model: *const ElkModel, out: *mut usize) -> ElkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        *output(out, "out")? = m.model.num_classes();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elk_model_window_len(model: *const ElkModel, out: *mut usize) -> ElkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        *output(out, "out")? = m.model.window_len();
        Ok(())
    })
}

/// Writes the class logits of one normalized window into `logits`, which
/// must hold `num_classes` values.
///
/// # Safety
/// `window` must point to `window_len` values and `logits` to `logits_len`.
#[no_mangle]
pub unsafe extern "C" fn elk_model_logits(
    model: *const ElkModel,
    window: *const f64,
    window_len: usize,
    logits: *mut f64,
    logits_len: usize,
) -> ElkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        let w = input(window, window_len, "window")?;
        let z = m.model.logits(w)?;
        if logits_len < z.len() {
            return Err(Fail(
                ElkStatus::BufferTooSmall,
                format!("logits buffer holds {logits_len}, need {}", z.len()),
            ));
        }
        if logits.is_null() {
            return Err(invalid("logits is null"));
        }
        slice::from_raw_parts_mut(logits, z.len()).copy_from_slice(&z);
        Ok(())
    })
}

/// Stage 1: predicted class and its softmax confidence.
///
/// # Safety
/// `logits` must point to `n` values; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn elk_stage1_match(logits: *const f64, n: usize, label: *mut usize, tau: *mut f64) -> ElkStatus {
    guard(|| {
        let (l, t) = stage1_match(input(logits, n, "logits")?)?;
        *output(label, "label")? = l;
        *output(tau, "tau")? = t;
        Ok(())
    })
}

/// Nearest-rank percentile `p` of the calibration confidences.
///
/// # Safety
/// `confidences` must point to `n` values and `phi` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elk_calibrate_percentile(confidences: *const f64, n: usize, p: f64, phi: *mut f64) -> ElkStatus {
    guard(|| {
        let c = input(confidences, n, "confidences")?;
        *output(phi, "phi")? = calibrate_threshold(c, &ThresholdPolicy::Percentile { p })?;
        Ok(())
    })
}

/// Stage 2: 1 when the window is rejected as unknown, 0 when the Stage-1
/// label is kept.
#[no_mangle]
pub extern "C" fn elk_stage2_is_unknown(tau: f64, phi: f64) -> i32 {
    (stage2_decide(tau, phi) == Decision::Unknown) as i32
}

/// Equal error rate of genuine versus impostor scores, with the threshold
/// that attains it (possibly infinite).
///
/// # Safety
/// Score arrays must hold the stated counts; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn elk_eer(
    genuine: *const f64,
    n_genuine: usize,
    impostor: *const f64,
    n_impostor: usize,
    eer: *mut f64,
    threshold: *mut f64,
) -> ElkStatus {
    guard(|| {
        let r = metrics::eer(input(genuine, n_genuine, "genuine")?, input(impostor, n_impostor, "impostor")?)?;
        *output(eer, "eer")? = r.eer;
        *output(threshold, "threshold")? = r.threshold;
        Ok(())
    })
}

/// Min-max normalizes `n` values into `out`. `*flat` is set to 1 when the
/// input is constant (the output is then all zeros).
///
/// # Safety
/// `values` and `out` must each point to `n` values; `flat` may be null.
#[no_mangle]
pub unsafe extern "C" fn elk_normalize(values: *const f64, n: usize, out: *mut f64, flat: *mut i32) -> ElkStatus {
    guard(|| {
        let (v, is_flat) = signal::minmax_normalize(input(values, n, "values")?)?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        slice::from_raw_parts_mut(out, n).copy_from_slice(&v);
        if let Some(f) = flat.as_mut() {
            *f = is_flat as i32;
        }
        Ok(())
    })
}

/// Resamples a signal from `from_hz` to `to_hz`. Call once with a null
/// `out` to learn the output length through `out_len`, then again with a
/// buffer of that size.
///
/// # Safety
/// `values` must point to `n` values, `out` to `*out_len` values or be null.
#[no_mangle]
pub unsafe extern "C" fn elk_resample(
    values: *const f64,
    n: usize,
    from_hz: f64,
    to_hz: f64,
    out: *mut f64,
    out_len: *mut usize,
) -> ElkStatus {
    guard(|| {
        let record = EcgRecord::new("ffi", "ffi", from_hz, input(values, n, "values")?.to_vec())?;
        let r = signal::resample(&record, to_hz)?;
        let len = output(out_len, "out_len")?;
        let capacity = *len;
        *len = r.samples.len();
        if out.is_null() {
            return Ok(());
        }
        if capacity < r.samples.len() {
            return Err(Fail(
                ElkStatus::BufferTooSmall,
                format!("output buffer holds {capacity}, need {}", r.samples.len()),
            ));
        }
        slice::from_raw_parts_mut(out, r.samples.len()).copy_from_slice(&r.samples);
        Ok(())
    })
}

/// Verifies a run bundle directory. On success the 64-character content
/// hash plus a NUL is written to `hash` when it is non-null.
///
/// # Safety
/// `dir` must be NUL-terminated; `hash` must hold `hash_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn elk_bundle_verify(dir: *const c_char, hash: *mut c_char, hash_len: usize) -> ElkStatus {
    guard(|| {
        let h = verify_bundle(path(dir)?)?;
        if hash.is_null() {
            return Ok(());
        }
        let bytes = h.content_hash.as_bytes();
        if hash_len < bytes.len() + 1 {
            return Err(Fail(
                ElkStatus::BufferTooSmall,
                format!("hash buffer holds {hash_len}, need {}", bytes.len() + 1),
            ));
        }
        let dst = slice::from_raw_parts_mut(hash.cast::<u8>(), bytes.len() + 1);
        dst[..bytes.len()].copy_from_slice(bytes);
        dst[bytes.len()] = 0;
        Ok(())
    })
}
