//! C ABI for loading model bundles and running inference.
//!
//! Handles are opaque; every fallible call returns a [`VbStatus`] and leaves a
//! thread-local message readable through [`vb_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use virobac::app::{load_model, BundleError, ModelBundle};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    DigestMismatch = 4,
    UnsupportedVersion = 5,
    MalformedFile = 6,
    FeatureLengthMismatch = 7,
    NonFiniteInput = 8,
    BufferTooSmall = 9,
    IndexOutOfRange = 10,
    Panic = 99,
}

/// A loaded, immutable model bundle.
pub struct VbModel {
    bundle: ModelBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: VbStatus, msg: impl Into<String>) -> VbStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> VbStatus) -> VbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == VbStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(VbStatus::Panic, "internal panic"),
    }
}

/// Copies `s` plus a NUL terminator into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize) -> VbStatus {
    if buf.is_null() {
        return fail(VbStatus::NullPointer, "buffer is null");
    }
    let bytes = s.as_bytes();
    if bytes.len() + 1 > len {
        return fail(VbStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1));
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    VbStatus::Ok
}

/// Loads and verifies a bundle file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vb_model_load(path: *const c_char, out: *mut *mut VbModel) -> VbStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(VbStatus::NullPointer, "path or out is null");
        }
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(VbStatus::InvalidUtf8, "path is not UTF-8");
        };
        match load_model(Path::new(p)) {
            Ok(bundle) => {
                *out = Box::into_raw(Box::new(VbModel { bundle }));
                VbStatus::Ok
            }
            Err(e) => {
                let status = match e {
                    BundleError::Io(_) => VbStatus::Io,
                    BundleError::DigestMismatch { .. } => VbStatus::DigestMismatch,
                    BundleError::UnsupportedVersion(_) => VbStatus::UnsupportedVersion,
                    BundleError::MalformedFile(_) | BundleError::Learner(_) => VbStatus::MalformedFile,
                };
                fail(status, e.to_string())
            }
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`vb_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vb_model_free(model: *mut VbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_model_n_features(model: *const VbModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.model.n_features)
}

/// Probability of a bacterial infection for one feature vector in canonical units.
///
/// # Safety
/// `features` must be valid for `n` doubles; `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vb_model_predict(model: *const VbModel, features: *const f64, n: usize, out: *mut f64) -> VbStatus {
    guard(|| {
        let (Some(m), false, false) = (model.as_ref(), features.is_null(), out.is_null()) else {
            return fail(VbStatus::NullPointer, "model, features or out is null");
        };
        let expected = m.bundle.model.n_features;
        if n != expected {
            return fail(VbStatus::FeatureLengthMismatch, format!("expected {expected} features, got {n}"));
        }
        let x = std::slice::from_raw_parts(features, n);
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return fail(VbStatus::NonFiniteInput, format!("feature {j} is not finite"));
        }
        match m.bundle.predict(x) {
            Ok(p) => {
                *out = p;
                VbStatus::Ok
            }
            Err(e) => fail(VbStatus::MalformedFile, e.to_string()),
        }
    })
}

/// Copies the model id into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn vb_model_id(model: *const VbModel, buf: *mut c_char, len: usize) -> VbStatus {
    guard(|| match model.as_ref() {
        Some(m) => write_str(&m.bundle.model_id, buf, len),
        None => fail(VbStatus::NullPointer, "model is null"),
    })
}

/// Copies the name of feature `index` into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn vb_model_feature_name(
    model: *const VbModel,
    index: usize,
    buf: *mut c_char,
    len: usize,
) -> VbStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(VbStatus::NullPointer, "model is null");
        };
        match m.bundle.feature_order.get(index) {
            Some(f) => write_str(&f.name, buf, len),
            None => fail(VbStatus::IndexOutOfRange, format!("feature index {index} out of range")),
        }
    })
}

/// Copies the calling thread's last error message into `buf` (empty after a success).
///
/// # Safety
/// `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn vb_last_error(buf: *mut c_char, len: usize) -> VbStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    write_str(&msg, buf, len)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
