//! C ABI over the desmoke filtering pipeline.
//!
//! The surface mirrors how the library is meant to be embedded: build a
//! config (defaults or JSON), open a pipeline on it, feed interleaved
//! `x, y, z, intensity` frames, and read back a keep mask plus an optional
//! JSON report. Handles are opaque; every fallible call returns a
//! [`DsmStatus`] and leaves a human-readable message in thread-local
//! storage for [`dsm_last_error`].
//!
//! Ownership rules are the usual ones: anything returned as a pointer has
//! exactly one matching `*_free` function, and nothing here takes ownership
//! of caller memory. The generated header lives in `include/desmoke.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use desmoke::pipeline::{process_frame, PipelineConfig, PipelineState};
use desmoke::{Point, PointCloud};

/// Outcome of a C API call. Anything but `Ok` leaves a message for
/// [`dsm_last_error`] on the calling thread.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsmStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was malformed (bad UTF-8, bad length, bad value).
    InvalidArgument = 2,
    /// The configuration failed to parse or validate.
    InvalidConfig = 3,
    /// The pipeline rejected the frame; see `dsm_last_error`.
    ProcessFailed = 4,
    /// A panic was caught at the boundary; state may be stale, not corrupt.
    Internal = 5,
}

/// Opaque pipeline configuration handle.
pub struct DsmConfig {
    inner: PipelineConfig,
}

/// Opaque streaming pipeline handle: a validated config plus the mutable
/// state (range gate, intensity threshold) threaded across frames.
pub struct DsmPipeline {
    cfg: PipelineConfig,
    state: PipelineState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::default();
    });
}

/// Runs `body` with panics converted to `DsmStatus::Internal` so unwinding
/// never crosses the C boundary.
fn guarded(body: impl FnOnce() -> DsmStatus) -> DsmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal panic: {msg}"));
            DsmStatus::Internal
        }
    }
}

/// Message from the most recent failing call on this thread, empty when the
/// last call succeeded. The pointer stays valid until the next API call on
/// the same thread; copy it out if you need to keep it.
#[no_mangle]
pub extern "C" fn dsm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn dsm_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
///
/// `s` must be a pointer previously returned by a `dsm_*` function that
/// documents this deallocator, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A new configuration with the documented defaults. Free with
/// [`dsm_config_free`]. Returns null only on internal failure.
#[no_mangle]
pub extern "C" fn dsm_config_default() -> *mut DsmConfig {
    clear_error();
    Box::into_raw(Box::new(DsmConfig {
        inner: PipelineConfig::default(),
    }))
}

/// Parses and validates a JSON configuration. Unknown keys and
/// out-of-range values are errors; absent keys keep their defaults. On
/// success writes a handle to `out` (free with [`dsm_config_free`]).
///
/// # Safety
///
/// `json` must be a valid nul-terminated C string and `out` a valid
/// pointer; both must outlive the call.
#[no_mangle]
pub unsafe extern "C" fn dsm_config_from_json(
    json: *const c_char,
    out: *mut *mut DsmConfig,
) -> DsmStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            set_error("dsm_config_from_json: null argument");
            return DsmStatus::NullPointer;
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => {
                set_error(format!("config is not UTF-8: {e}"));
                return DsmStatus::InvalidArgument;
            }
        };
        let cfg: PipelineConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(format!("config: {e}"));
                return DsmStatus::InvalidConfig;
            }
        };
        if let Err(e) = cfg.validate() {
            set_error(e);
            return DsmStatus::InvalidConfig;
        }
        *out = Box::into_raw(Box::new(DsmConfig { inner: cfg }));
        clear_error();
        DsmStatus::Ok
    })
}

/// Serializes a configuration to pretty JSON. Free the returned string with
/// [`dsm_string_free`]. Returns null if `cfg` is null.
///
/// # Safety
///
/// `cfg` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn dsm_config_to_json(cfg: *const DsmConfig) -> *mut c_char {
    if cfg.is_null() {
        set_error("dsm_config_to_json: null config");
        return std::ptr::null_mut();
    }
    let json = match serde_json::to_string_pretty(&(*cfg).inner) {
        Ok(j) => j,
        Err(e) => {
            set_error(format!("config serialization: {e}"));
            return std::ptr::null_mut();
        }
    };
    clear_error();
    CString::new(json).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Frees a configuration handle. Null is a no-op.
///
/// # Safety
///
/// `cfg` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsm_config_free(cfg: *mut DsmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Opens a pipeline on a copy of `cfg`; the config handle remains owned by
/// the caller. Free with [`dsm_pipeline_free`].
///
/// # Safety
///
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsm_pipeline_new(
    cfg: *const DsmConfig,
    out: *mut *mut DsmPipeline,
) -> DsmStatus {
    guarded(|| {
        if cfg.is_null() || out.is_null() {
            set_error("dsm_pipeline_new: null argument");
            return DsmStatus::NullPointer;
        }
        let cfg = (*cfg).inner.clone();
        let state = match PipelineState::new(&cfg) {
            Ok(s) => s,
            Err(e) => {
                set_error(e);
                return DsmStatus::InvalidConfig;
            }
        };
        *out = Box::into_raw(Box::new(DsmPipeline { cfg, state }));
        clear_error();
        DsmStatus::Ok
    })
}

/// Returns the pipeline to its initial state (initial split radius and
/// intensity threshold), as if no frames had been processed.
///
/// # Safety
///
/// `pipeline` must be a live handle from [`dsm_pipeline_new`].
#[no_mangle]
pub unsafe extern "C" fn dsm_pipeline_reset(pipeline: *mut DsmPipeline) -> DsmStatus {
    guarded(|| {
        if pipeline.is_null() {
            set_error("dsm_pipeline_reset: null pipeline");
            return DsmStatus::NullPointer;
        }
        let p = &mut *pipeline;
        match PipelineState::new(&p.cfg) {
            Ok(state) => {
                p.state = state;
                clear_error();
                DsmStatus::Ok
            }
            Err(e) => {
                set_error(e);
                DsmStatus::InvalidConfig
            }
        }
    })
}

/// Frees a pipeline handle. Null is a no-op.
///
/// # Safety
///
/// `pipeline` must come from [`dsm_pipeline_new`] and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsm_pipeline_free(pipeline: *mut DsmPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Filters one frame.
///
/// `points` holds `point_count` points as interleaved
/// `x, y, z, intensity` doubles (`4 * point_count` values). `timestamp` is
/// seconds; pass NaN for an untimed frame, which disables the once-per-
/// second adaptive updates for that frame. On success `keep_mask[i]` is 1
/// where point `i` survived every stage and 0 where it was rejected or
/// fell beyond the outer range gate.
///
/// When `report_json` is non-null it receives the frame report (stage
/// counts, timings, adaptive snapshot) as a JSON document; free it with
/// [`dsm_string_free`]. Timestamps are not required to be monotonic here;
/// feeding frames out of order simply delays the adaptive samplers.
///
/// # Safety
///
/// `pipeline` must be a live handle. `points` must reference
/// `4 * point_count` readable doubles and `keep_mask` `point_count`
/// writable bytes (both may be null only when `point_count` is 0).
/// `report_json`, when non-null, must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsm_pipeline_process(
    pipeline: *mut DsmPipeline,
    points: *const f64,
    point_count: usize,
    timestamp: f64,
    keep_mask: *mut u8,
    report_json: *mut *mut c_char,
) -> DsmStatus {
    guarded(|| {
        if pipeline.is_null() {
            set_error("dsm_pipeline_process: null pipeline");
            return DsmStatus::NullPointer;
        }
        if point_count > 0 && (points.is_null() || keep_mask.is_null()) {
            set_error("dsm_pipeline_process: null points or keep_mask with nonzero count");
            return DsmStatus::NullPointer;
        }
        let p = &mut *pipeline;

        let mut cloud = PointCloud::new(
            (0..point_count)
                .map(|i| {
                    let base = points.add(i * 4);
                    Point::new(*base, *base.add(1), *base.add(2), *base.add(3))
                })
                .collect(),
        );
        cloud.timestamp = if timestamp.is_nan() {
            None
        } else {
            Some(timestamp)
        };

        let result = match process_frame(&cloud, &p.cfg, &mut p.state) {
            Ok(r) => r,
            Err(e) => {
                set_error(e);
                return DsmStatus::ProcessFailed;
            }
        };

        if point_count > 0 {
            std::ptr::write_bytes(keep_mask, 0, point_count);
            for &i in &result.kept_indices {
                *keep_mask.add(i) = 1;
            }
        }
        if !report_json.is_null() {
            *report_json = match serde_json::to_string_pretty(&result.report) {
                Ok(json) => CString::new(json).map_or(std::ptr::null_mut(), CString::into_raw),
                Err(e) => {
                    set_error(format!("report serialization: {e}"));
                    return DsmStatus::ProcessFailed;
                }
            };
        }
        clear_error();
        DsmStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_slot_is_cleared_on_success() {
        set_error("boom");
        let cfg = dsm_config_default();
        let text = unsafe { CStr::from_ptr(dsm_last_error()) };
        assert!(text.to_bytes().is_empty());
        unsafe { dsm_config_free(cfg) };
    }

    #[test]
    fn nul_bytes_in_messages_are_sanitized() {
        set_error("a\0b");
        let text = unsafe { CStr::from_ptr(dsm_last_error()) };
        assert_eq!(text.to_str().unwrap(), "a b");
    }
}
