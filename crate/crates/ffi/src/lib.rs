//! C ABI over `cdw-core`.
//!
//! Every function returns a [`CdwStatus`]; on failure the message is kept
//! per thread and read with [`cdw_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cdw_core::config::{parse_config_str, ExperimentConfig};
use cdw_core::run::{run_pipeline, RunOutput};
use cdw_core::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    Compute = 7,
    BufferTooSmall = 8,
    NotAvailable = 9,
    Panic = 10,
}

/// Parsed experiment configuration.
pub struct CdwConfig {
    text: String,
    overrides: Vec<(String, String, String)>,
    parsed: ExperimentConfig,
}

/// Result of [`cdw_run`]: image, envelope and scalar metrics.
pub struct CdwRun {
    out: RunOutput,
    gray: Vec<u8>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> CdwStatus {
    match e {
        Error::Config(_) | Error::UnknownPreset(_) => CdwStatus::Config,
        Error::Io { .. } => CdwStatus::Io,
        Error::Format { .. } => CdwStatus::Format,
        Error::InvalidParameter { .. } | Error::OutOfRegion { .. } | Error::NoKnownPair(_) => CdwStatus::InvalidArgument,
        _ => CdwStatus::Compute,
    }
}

struct Fail(CdwStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CdwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CdwStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            CdwStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(CdwStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CdwStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(CdwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(CdwStatus::NullPointer, format!("{what} is null")))
}

/// Copies `src` into a caller buffer of `cap` elements; `len` receives the
/// number needed. A null `buf` only queries the size.
unsafe fn fill<T: Copy>(src: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), Fail> {
    if !len.is_null() {
        *len = src.len();
    }
    if buf.is_null() {
        return Ok(());
    }
    if cap < src.len() {
        return Err(Fail(CdwStatus::BufferTooSmall, format!("need {} elements, got {cap}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn reparse(cfg: &mut CdwConfig) -> Result<(), Fail> {
    let ov: Vec<(&str, &str, String)> = cfg.overrides.iter().map(|(s, k, v)| (s.as_str(), k.as_str(), v.clone())).collect();
    cfg.parsed = parse_config_str(&cfg.text, &ov)?;
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cdw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses configuration text. An empty string gives the defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdw_config_from_str(text: *const c_char, out: *mut *mut CdwConfig) -> CdwStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let t = c_str(text, "text")?.to_string();
        let parsed = parse_config_str(&t, &[])?;
        *out = Box::into_raw(Box::new(CdwConfig {
            text: t,
            overrides: Vec::new(),
            parsed,
        }));
        Ok(())
    })
}

/// Reads and parses a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdw_config_from_file(path: *const c_char, out: *mut *mut CdwConfig) -> CdwStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = PathBuf::from(c_str(path, "path")?);
        let t = cdw_core::io::read_text(&p)?;
        let parsed = parse_config_str(&t, &[])?;
        *out = Box::into_raw(Box::new(CdwConfig {
            text: t,
            overrides: Vec::new(),
            parsed,
        }));
        Ok(())
    })
}

/// Overrides one key. The configuration is left unchanged when the result is invalid.
///
/// # Safety
/// `cfg` must come from a `cdw_config_*` constructor; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cdw_config_set(
    cfg: *mut CdwConfig,
    section: *const c_char,
    key: *const c_char,
    value: *const c_char,
) -> CdwStatus {
    guard(|| {
        let cfg = out_ptr(cfg, "cfg")?;
        let entry = (
            c_str(section, "section")?.to_string(),
            c_str(key, "key")?.to_string(),
            c_str(value, "value")?.to_string(),
        );
        let mut next = CdwConfig {
            text: cfg.text.clone(),
            overrides: cfg.overrides.clone(),
            parsed: cfg.parsed.clone(),
        };
        next.overrides.retain(|(s, k, _)| !(*s == entry.0 && *k == entry.1));
        next.overrides.push(entry);
        reparse(&mut next)?;
        *cfg = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from a `cdw_config_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn cdw_config_free(cfg: *mut CdwConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the experiment. Artifacts go to `out_dir`, or the configured
/// directory when it is null.
///
/// # Safety
/// `cfg` must be a live handle; `out_dir` null or NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cdw_run(cfg: *const CdwConfig, out_dir: *const c_char, out: *mut *mut CdwRun) -> CdwStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = handle(cfg, "cfg")?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(c_str(out_dir, "out_dir")?))
        };
        let res = run_pipeline(&cfg.parsed, dir.as_deref())?;
        let gray = res.image.gray();
        *out = Box::into_raw(Box::new(CdwRun { out: res, gray }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or come from [`cdw_run`], freed once.
#[no_mangle]
pub unsafe extern "C" fn cdw_run_free(run: *mut CdwRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Polar envelope size.
///
/// # Safety
/// `run` must be a live handle; outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cdw_run_envelope_dims(run: *const CdwRun, n_angles: *mut usize, n_ranges: *mut usize) -> CdwStatus {
    guard(|| {
        let g = &handle(run, "run")?.out.image.envelope.grid;
        *out_ptr(n_angles, "n_angles")? = g.n_angles();
        *out_ptr(n_ranges, "n_ranges")? = g.n_ranges();
        Ok(())
    })
}

/// Envelope samples, angle-major.
///
/// # Safety
/// `run` must be a live handle; `buf` null or `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cdw_run_envelope(run: *const CdwRun, buf: *mut f64, cap: usize, len: *mut usize) -> CdwStatus {
    guard(|| fill(handle(run, "run")?.out.image.envelope.data(), buf, cap, len))
}

/// Angles in degrees and ranges in metres of the polar grid.
///
/// # Safety
/// As [`cdw_run_envelope`].
#[no_mangle]
pub unsafe extern "C" fn cdw_run_axes(
    run: *const CdwRun,
    angles_deg: *mut f64,
    n_angles: usize,
    ranges_m: *mut f64,
    n_ranges: usize,
) -> CdwStatus {
    guard(|| {
        let g = &handle(run, "run")?.out.image.envelope.grid;
        fill(g.angles_deg(), angles_deg, n_angles, ptr::null_mut())?;
        fill(g.ranges(), ranges_m, n_ranges, ptr::null_mut())
    })
}

/// Size of the 8-bit B-mode image.
///
/// # Safety
/// As [`cdw_run_envelope_dims`].
#[no_mangle]
pub unsafe extern "C" fn cdw_run_bmode_dims(run: *const CdwRun, width: *mut usize, height: *mut usize) -> CdwStatus {
    guard(|| {
        let c = &handle(run, "run")?.out.image.cartesian;
        *out_ptr(width, "width")? = c.nx;
        *out_ptr(height, "height")? = c.nz;
        Ok(())
    })
}

/// B-mode gray levels, row-major from the shallowest row.
///
/// # Safety
/// `run` must be a live handle; `buf` null or `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cdw_run_bmode(run: *const CdwRun, buf: *mut u8, cap: usize, len: *mut usize) -> CdwStatus {
    guard(|| fill(&handle(run, "run")?.gray, buf, cap, len))
}

/// Pin signal strengths in dB, in phantom order.
///
/// # Safety
/// As [`cdw_run_envelope`].
#[no_mangle]
pub unsafe extern "C" fn cdw_run_signal_strength(run: *const CdwRun, buf: *mut f64, cap: usize, len: *mut usize) -> CdwStatus {
    guard(|| fill(&handle(run, "run")?.out.signal_strength_db, buf, cap, len))
}

/// Penetration depth in metres; `NotAvailable` without noise or when the
/// SNR never drops below threshold.
///
/// # Safety
/// `run` must be a live handle; `depth` valid.
#[no_mangle]
pub unsafe extern "C" fn cdw_run_penetration_depth(run: *const CdwRun, depth: *mut f64) -> CdwStatus {
    guard(|| {
        let d = handle(run, "run")?.out.penetration_depth;
        let out = out_ptr(depth, "depth")?;
        match d {
            Some(v) => {
                *out = v;
                Ok(())
            }
            None => Err(Fail(CdwStatus::NotAvailable, "no penetration depth for this run".into())),
        }
    })
}

/// Golay pair of `bits` chips as ±1 values.
///
/// # Safety
/// `a` and `b` null or `cap` writable bytes; `len` null or valid.
#[no_mangle]
pub unsafe extern "C" fn cdw_golay_pair(bits: usize, a: *mut i8, b: *mut i8, cap: usize, len: *mut usize) -> CdwStatus {
    guard(|| {
        let p = cdw_core::codes::golay_pair(bits)?;
        fill(p.seq_a(), a, cap, len)?;
        fill(p.seq_b(), b, cap, ptr::null_mut())
    })
}
