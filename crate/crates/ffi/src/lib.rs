//! C interface to the enhancer: load a trained checkpoint, enhance mono 16 kHz buffers.
//!
//! Every function returns a [`SpseStatus`]; on failure a description is available from
//! [`spse_last_error`] on the same thread until the next call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spse::app::commands::load_for_inference;
use spse::signal::Waveform;
use spse::system::Enhancer;
use spse::Error;

/// Result of every call. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpseStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    BadCheckpoint = 4,
    ConfigMismatch = 5,
    TooShort = 6,
    NonFinite = 7,
    Internal = 8,
}

/// Opaque enhancer handle.
pub struct SpseEnhancer {
    model: Enhancer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpseStatus {
    match e {
        Error::Io(_) => SpseStatus::Io,
        Error::Json(_) | Error::Format { .. } => SpseStatus::BadCheckpoint,
        Error::ConfigMismatch(_) | Error::MissingPrerequisite(_) => SpseStatus::ConfigMismatch,
        Error::TooShort { .. } => SpseStatus::TooShort,
        Error::NonFinite(_) => SpseStatus::NonFinite,
        Error::InvalidConfig(_) | Error::LengthMismatch(..) | Error::ShapeMismatch { .. } => {
            SpseStatus::InvalidArgument
        }
        _ => SpseStatus::Internal,
    }
}

/// Clears the last error, runs `f`, records any failure and converts panics to `Internal`.
fn guard(f: impl FnOnce() -> Result<(), (SpseStatus, String)>) -> SpseStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpseStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpseStatus::Internal
        }
    }
}

fn fail(e: Error) -> (SpseStatus, String) {
    (status_of(&e), e.to_string())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn spse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint that finished training (stage hc, or pl for a model without
/// compensation) and stores a new handle in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn spse_enhancer_open(
    path: *const c_char,
    out: *mut *mut SpseEnhancer,
) -> SpseStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err((
                SpseStatus::NullArgument,
                "path and out must not be NULL".into(),
            ));
        }
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| (SpseStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let model = load_for_inference(Path::new(path)).map_err(fail)?;
        // SAFETY: checked non-null; the caller guarantees it is writable.
        unsafe { *out = Box::into_raw(Box::new(SpseEnhancer { model })) };
        Ok(())
    })
}

/// Sample rate in Hz that inputs must use, or 0 for a NULL handle.
///
/// # Safety
/// `handle` must be NULL or a live handle from [`spse_enhancer_open`].
#[no_mangle]
pub unsafe extern "C" fn spse_enhancer_sample_rate(handle: *const SpseEnhancer) -> u32 {
    // SAFETY: the caller guarantees the handle is live when non-null.
    unsafe { handle.as_ref() }.map_or(0, |h| h.model.stft.sample_rate_hz)
}

/// Enhances `len` samples from `input` into `output`, which must hold `len` samples too.
/// Input and output may not overlap.
///
/// # Safety
/// `handle` must be a live handle; `input` and `output` must point to `len` readable and
/// writable floats respectively.
#[no_mangle]
pub unsafe extern "C" fn spse_enhance(
    handle: *const SpseEnhancer,
    input: *const f32,
    output: *mut f32,
    len: usize,
) -> SpseStatus {
    guard(|| {
        if handle.is_null() || input.is_null() || output.is_null() {
            return Err((
                SpseStatus::NullArgument,
                "handle, input and output must not be NULL".into(),
            ));
        }
        // SAFETY: checked non-null; the caller guarantees the extents and liveness.
        let (h, x) = unsafe { (&*handle, std::slice::from_raw_parts(input, len)) };
        if x.iter().any(|v| !v.is_finite()) {
            return Err((
                SpseStatus::InvalidArgument,
                "input contains NaN or infinity".into(),
            ));
        }
        let wave = Waveform::new(x.iter().map(|&v| v as f64).collect());
        let e = h.model.enhance(&wave).map_err(fail)?;
        if !e.wave.is_finite() {
            return Err(fail(Error::NonFinite("enhanced output".into())));
        }
        // SAFETY: checked non-null; the caller guarantees `len` writable floats.
        let y = unsafe { std::slice::from_raw_parts_mut(output, len) };
        for (o, v) in y.iter_mut().zip(&e.wave.samples) {
            *o = *v as f32;
        }
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `handle` must be NULL or a handle from [`spse_enhancer_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spse_enhancer_free(handle: *mut SpseEnhancer) {
    if !handle.is_null() {
        // SAFETY: the caller passes ownership of a handle created by `Box::into_raw`.
        drop(unsafe { Box::from_raw(handle) });
    }
}
