//! C ABI for the group-evolution engine.
//!
//! Handles are opaque pointers owned by this library; every constructor has a
//! matching `_free`. Calls return a [`GeaStatus`] code and leave a detailed
//! message retrievable through [`gea_last_error_message`] on failure. Run
//! configuration crosses the boundary as JSON in the same schema the `gea`
//! CLI reads, which keeps the surface small and version-checked in one place.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gea_core::engine::{self, RunConfig, RunTranscript};
use gea_core::error::GeaError;
use gea_core::{Archive, SimWorld};

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Io = 4,
    ParseError = 5,
    VersionMismatch = 6,
    RunFailed = 7,
    ReplayDiverged = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_for(error: &GeaError) -> GeaStatus {
    match error {
        GeaError::InvalidConfig(_) => GeaStatus::InvalidConfig,
        GeaError::Io(_) => GeaStatus::Io,
        GeaError::Parse { .. } => GeaStatus::ParseError,
        GeaError::FormatVersion { .. } => GeaStatus::VersionMismatch,
        _ => GeaStatus::RunFailed,
    }
}

fn fail(error: GeaError) -> GeaStatus {
    let status = status_for(&error);
    set_error(error.to_string());
    status
}

/// Wraps a body so panics become status codes instead of unwinding across
/// the ABI.
fn guarded(body: impl FnOnce() -> GeaStatus) -> GeaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            GeaStatus::Panic
        }
    }
}

unsafe fn path_from<'a>(ptr: *const c_char) -> Result<&'a Path, GeaStatus> {
    if ptr.is_null() {
        set_error("null path".to_string());
        return Err(GeaStatus::NullArgument);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8".to_string());
            Err(GeaStatus::InvalidUtf8)
        }
    }
}

/// Opaque world handle.
pub struct GeaWorld(SimWorld);
/// Opaque archive handle.
pub struct GeaArchive(Archive);
/// Opaque transcript handle.
pub struct GeaTranscript(RunTranscript);

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn gea_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Latest error message for this thread, or NULL when the last call
/// succeeded. Free with [`gea_string_free`].
#[no_mangle]
pub extern "C" fn gea_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by [`gea_last_error_message`]
/// and not yet freed; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gea_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Generates a deterministic task world.
///
/// # Safety
/// `out` must be a valid pointer to a `GeaWorld*` slot.
#[no_mangle]
pub unsafe extern "C" fn gea_world_generate(
    task_count: u64,
    n_tools: u64,
    seed: u64,
    out: *mut *mut GeaWorld,
) -> GeaStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output slot".to_string());
            return GeaStatus::NullArgument;
        }
        clear_error();
        match gea_core::simenv::generate_world(task_count as usize, n_tools as usize, seed) {
            Ok(world) => {
                unsafe { *out = Box::into_raw(Box::new(GeaWorld(world))) };
                GeaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a world file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn gea_world_load(path: *const c_char, out: *mut *mut GeaWorld) -> GeaStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output slot".to_string());
            return GeaStatus::NullArgument;
        }
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        clear_error();
        match SimWorld::load(path) {
            Ok(world) => {
                unsafe { *out = Box::into_raw(Box::new(GeaWorld(world))) };
                GeaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes a world file.
///
/// # Safety
/// `world` must be a live handle from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gea_world_save(world: *const GeaWorld, path: *const c_char) -> GeaStatus {
    guarded(|| {
        let Some(world) = (unsafe { world.as_ref() }) else {
            set_error("null world handle".to_string());
            return GeaStatus::NullArgument;
        };
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        clear_error();
        match world.0.save(path) {
            Ok(()) => GeaStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of tasks in the world, or 0 for a null handle.
///
/// # Safety
/// `world` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gea_world_task_count(world: *const GeaWorld) -> u64 {
    unsafe { world.as_ref() }
        .map(|w| w.0.task_count as u64)
        .unwrap_or(0)
}

/// # Safety
/// `world` must be a handle from this library, not yet freed; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gea_world_free(world: *mut GeaWorld) {
    if !world.is_null() {
        drop(unsafe { Box::from_raw(world) });
    }
}

/// Executes one evolution run from a JSON run configuration (the same schema
/// as the CLI's `run` section) and returns the transcript.
///
/// # Safety
/// `config_json` must be a NUL-terminated UTF-8 string; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn gea_run_json(
    config_json: *const c_char,
    out: *mut *mut GeaTranscript,
) -> GeaStatus {
    guarded(|| {
        if config_json.is_null() || out.is_null() {
            set_error("null argument".to_string());
            return GeaStatus::NullArgument;
        }
        let text = match unsafe { CStr::from_ptr(config_json) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("config is not valid UTF-8".to_string());
                return GeaStatus::InvalidUtf8;
            }
        };
        let config: RunConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(format!("invalid configuration: {e}"));
                return GeaStatus::InvalidConfig;
            }
        };
        clear_error();
        match engine::run(config) {
            Ok(transcript) => {
                unsafe { *out = Box::into_raw(Box::new(GeaTranscript(transcript))) };
                GeaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a transcript file.
///
/// # Safety
/// `path` must be NUL-terminated UTF-8; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_load(
    path: *const c_char,
    out: *mut *mut GeaTranscript,
) -> GeaStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output slot".to_string());
            return GeaStatus::NullArgument;
        }
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        clear_error();
        match RunTranscript::load(path) {
            Ok(t) => {
                unsafe { *out = Box::into_raw(Box::new(GeaTranscript(t))) };
                GeaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes a transcript file.
///
/// # Safety
/// `transcript` must be a live handle; `path` NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_save(
    transcript: *const GeaTranscript,
    path: *const c_char,
) -> GeaStatus {
    guarded(|| {
        let Some(transcript) = (unsafe { transcript.as_ref() }) else {
            set_error("null transcript handle".to_string());
            return GeaStatus::NullArgument;
        };
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        clear_error();
        match transcript.0.save(path) {
            Ok(()) => GeaStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Iterations recorded in the transcript.
///
/// # Safety
/// `transcript` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_iterations(transcript: *const GeaTranscript) -> u64 {
    unsafe { transcript.as_ref() }
        .map(|t| t.0.iterations.len() as u64)
        .unwrap_or(0)
}

/// Total offspring evolved across the run.
///
/// # Safety
/// `transcript` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_evolved_count(transcript: *const GeaTranscript) -> u64 {
    unsafe { transcript.as_ref() }
        .map(|t| t.0.evolved_count() as u64)
        .unwrap_or(0)
}

/// Best selectable success rate at the end of the run.
///
/// # Safety
/// `transcript` must be a live handle; `out` a valid f64 slot.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_final_best(
    transcript: *const GeaTranscript,
    out: *mut f64,
) -> GeaStatus {
    guarded(|| {
        let Some(transcript) = (unsafe { transcript.as_ref() }) else {
            set_error("null argument".to_string());
            return GeaStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null output slot".to_string());
            return GeaStatus::NullArgument;
        }
        clear_error();
        let best = transcript
            .0
            .iterations
            .last()
            .map(|it| it.best_performance)
            .unwrap_or(0.0);
        unsafe { *out = best };
        GeaStatus::Ok
    })
}

/// Re-executes the transcript's config and verifies every recorded field.
///
/// # Safety
/// `transcript` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_replay(transcript: *const GeaTranscript) -> GeaStatus {
    guarded(|| {
        let Some(transcript) = (unsafe { transcript.as_ref() }) else {
            set_error("null transcript handle".to_string());
            return GeaStatus::NullArgument;
        };
        clear_error();
        match engine::replay(&transcript.0) {
            Ok(report) if report.is_clean() => GeaStatus::Ok,
            Ok(report) => {
                let first = &report.divergences[0];
                set_error(format!(
                    "replay diverged at iteration {}, field {}",
                    first.iteration, first.field
                ));
                GeaStatus::ReplayDiverged
            }
            Err(e) => fail(e),
        }
    })
}

/// Extracts the final archive from a transcript.
///
/// # Safety
/// `transcript` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_final_archive(
    transcript: *const GeaTranscript,
    out: *mut *mut GeaArchive,
) -> GeaStatus {
    guarded(|| {
        let Some(transcript) = (unsafe { transcript.as_ref() }) else {
            set_error("null argument".to_string());
            return GeaStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null output slot".to_string());
            return GeaStatus::NullArgument;
        }
        clear_error();
        match transcript.0.final_archive() {
            Ok(archive) => {
                unsafe { *out = Box::into_raw(Box::new(GeaArchive(archive))) };
                GeaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `transcript` must be a handle from this library, not yet freed; NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gea_transcript_free(transcript: *mut GeaTranscript) {
    if !transcript.is_null() {
        drop(unsafe { Box::from_raw(transcript) });
    }
}

/// Loads an archive file.
///
/// # Safety
/// `path` must be NUL-terminated UTF-8; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn gea_archive_load(
    path: *const c_char,
    out: *mut *mut GeaArchive,
) -> GeaStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output slot".to_string());
            return GeaStatus::NullArgument;
        }
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        clear_error();
        match Archive::load(path) {
            Ok(archive) => {
                unsafe { *out = Box::into_raw(Box::new(GeaArchive(archive))) };
                GeaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes an archive file.
///
/// # Safety
/// `archive` must be a live handle; `path` NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn gea_archive_save(
    archive: *const GeaArchive,
    path: *const c_char,
) -> GeaStatus {
    guarded(|| {
        let Some(archive) = (unsafe { archive.as_ref() }) else {
            set_error("null archive handle".to_string());
            return GeaStatus::NullArgument;
        };
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        clear_error();
        match archive.0.save(path) {
            Ok(()) => GeaStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of records in the archive.
///
/// # Safety
/// `archive` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gea_archive_len(archive: *const GeaArchive) -> u64 {
    unsafe { archive.as_ref() }
        .map(|a| a.0.len() as u64)
        .unwrap_or(0)
}

/// Number of gate-passed (selectable) records.
///
/// # Safety
/// `archive` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gea_archive_selectable_len(archive: *const GeaArchive) -> u64 {
    unsafe { archive.as_ref() }
        .map(|a| a.0.selectable_count() as u64)
        .unwrap_or(0)
}

/// Best selectable success rate, or -1 when the archive has none.
///
/// # Safety
/// `archive` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gea_archive_best_performance(archive: *const GeaArchive) -> f64 {
    unsafe { archive.as_ref() }
        .and_then(|a| a.0.best_selectable().map(|r| r.performance))
        .unwrap_or(-1.0)
}

/// # Safety
/// `archive` must be a handle from this library, not yet freed; NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gea_archive_free(archive: *mut GeaArchive) {
    if !archive.is_null() {
        drop(unsafe { Box::from_raw(archive) });
    }
}
