//! C ABI for scoring clips with a fitted model bundle. Handles are opaque;
//! every fallible call returns a status code and records a message
//! retrievable with `twfr_gmm_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::path::Path;

use twfr_gmm::pipeline::ModelBundle;
use twfr_gmm::AudioClip;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Status codes returned by all fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwfrGmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    LoadFailed = 3,
    ScoreFailed = 4,
    InvalidArgument = 5,
}

/// Opaque handle to a loaded model bundle.
pub struct TwfrGmmModel {
    bundle: ModelBundle,
}

/// Load a model bundle (JSON produced by the `fit` command) from `path`.
/// On success writes a handle to `out_model`; release it with
/// `twfr_gmm_model_free`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out_model` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn twfr_gmm_model_load(
    path: *const c_char,
    out_model: *mut *mut TwfrGmmModel,
) -> TwfrGmmStatus {
    if path.is_null() || out_model.is_null() {
        set_error("null pointer argument");
        return TwfrGmmStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return TwfrGmmStatus::InvalidUtf8;
        }
    };
    match ModelBundle::load(Path::new(path)) {
        Ok(bundle) => {
            *out_model = Box::into_raw(Box::new(TwfrGmmModel { bundle }));
            TwfrGmmStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            TwfrGmmStatus::LoadFailed
        }
    }
}

/// Release a handle returned by `twfr_gmm_model_load`. Null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer from `twfr_gmm_model_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn twfr_gmm_model_free(model: *mut TwfrGmmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of detection-stage parameters in the model (0 for null).
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn twfr_gmm_model_parameter_count(model: *const TwfrGmmModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).bundle.parameter_count()
}

/// The pooling exponent the model was fitted with (NaN for null).
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn twfr_gmm_model_r(model: *const TwfrGmmModel) -> f64 {
    if model.is_null() {
        return f64::NAN;
    }
    (*model).bundle.r
}

/// Anomaly-score a mono sample buffer (amplitudes in [-1, 1]) at the given
/// sample rate. Higher scores are more anomalous.
///
/// # Safety
/// `samples` must point to `len` readable f64 values; `out_score` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twfr_gmm_score_samples(
    model: *const TwfrGmmModel,
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out_score: *mut f64,
) -> TwfrGmmStatus {
    if model.is_null() || samples.is_null() || out_score.is_null() {
        set_error("null pointer argument");
        return TwfrGmmStatus::NullPointer;
    }
    if len == 0 {
        set_error("empty sample buffer");
        return TwfrGmmStatus::InvalidArgument;
    }
    let clip = AudioClip {
        samples: std::slice::from_raw_parts(samples, len).to_vec(),
        sample_rate,
        source_path: "<ffi buffer>".into(),
    };
    match (*model).bundle.score_clip(&clip) {
        Ok(score) => {
            *out_score = score;
            TwfrGmmStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            TwfrGmmStatus::ScoreFailed
        }
    }
}

/// Anomaly-score a WAV file on disk.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out_score` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twfr_gmm_score_wav(
    model: *const TwfrGmmModel,
    path: *const c_char,
    out_score: *mut f64,
) -> TwfrGmmStatus {
    if model.is_null() || path.is_null() || out_score.is_null() {
        set_error("null pointer argument");
        return TwfrGmmStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return TwfrGmmStatus::InvalidUtf8;
        }
    };
    let clip = match twfr_gmm::audio_io::decode_wav(Path::new(path)) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return TwfrGmmStatus::ScoreFailed;
        }
    };
    match (*model).bundle.score_clip(&clip) {
        Ok(score) => {
            *out_score = score;
            TwfrGmmStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            TwfrGmmStatus::ScoreFailed
        }
    }
}

/// Copy the last error message for this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null to query the length.
#[no_mangle]
pub unsafe extern "C" fn twfr_gmm_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}
