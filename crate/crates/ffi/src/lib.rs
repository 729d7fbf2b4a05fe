//! C ABI over the `ddcrp` harness.
//!
//! A run is described by the same TOML document the CLI reads. Fitting
//! yields an opaque [`DdcrpFit`] handle that is queried through copy-out
//! accessors and released with [`ddcrp_fit_free`]. Every fallible call
//! returns a [`DdcrpStatus`]; on failure [`ddcrp_last_error`] holds a
//! message for the calling thread.

use ddcrp::harness::{self, presets, FitOutput, RunConfig};
use ddcrp::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Outcome of an FFI call. Values other than `Ok` leave outputs untouched.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdcrpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Chain, sample or cluster index out of range.
    OutOfRange = 3,
    /// The caller's buffer is shorter than the data.
    BufferTooSmall = 4,
    InvalidInput = 10,
    Config = 11,
    Data = 12,
    Unsupported = 13,
    UndefinedStatistic = 14,
    Numeric = 15,
    Io = 16,
    /// The engine panicked; the handle arguments are still valid.
    Panic = 99,
}

impl From<&Error> for DdcrpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => DdcrpStatus::InvalidInput,
            Error::Config(_) => DdcrpStatus::Config,
            Error::Data(_) => DdcrpStatus::Data,
            Error::Unsupported(_) => DdcrpStatus::Unsupported,
            Error::UndefinedStatistic(_) => DdcrpStatus::UndefinedStatistic,
            Error::Numeric(_) => DdcrpStatus::Numeric,
            Error::Io(_) => DdcrpStatus::Io,
        }
    }
}

/// A completed fit: dataset, per-chain traces and summary report.
pub struct DdcrpFit {
    out: FitOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: DdcrpStatus, msg: impl Into<String>) -> DdcrpStatus {
    set_error(msg);
    status
}

/// Run `f`, converting panics into `DdcrpStatus::Panic`.
fn guard(f: impl FnOnce() -> DdcrpStatus) -> DdcrpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(DdcrpStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, DdcrpStatus> {
    if p.is_null() {
        return Err(fail(DdcrpStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DdcrpStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn fit_ref<'a>(fit: *const DdcrpFit) -> Result<&'a DdcrpFit, DdcrpStatus> {
    fit.as_ref()
        .ok_or_else(|| fail(DdcrpStatus::NullPointer, "null fit handle"))
}

/// Store a computed value through `out`.
unsafe fn put<T>(value: Result<T, DdcrpStatus>, out: *mut T) -> DdcrpStatus {
    if out.is_null() {
        return fail(DdcrpStatus::NullPointer, "null output pointer");
    }
    match value {
        Ok(v) => {
            *out = v;
            DdcrpStatus::Ok
        }
        Err(s) => s,
    }
}

fn run_fit(cfg: ddcrp::Result<RunConfig>, out: *mut *mut DdcrpFit) -> DdcrpStatus {
    if out.is_null() {
        return fail(DdcrpStatus::NullPointer, "null output pointer");
    }
    match cfg.and_then(|c| harness::fit(&c)) {
        Ok(fit) => {
            // SAFETY: `out` is non-null and points to writable storage.
            unsafe { *out = Box::into_raw(Box::new(DdcrpFit { out: fit })) };
            DdcrpStatus::Ok
        }
        Err(e) => fail(DdcrpStatus::from(&e), e.to_string()),
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ddcrp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddcrp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fit the run described by the TOML document `config`.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_from_toml(config: *const c_char, out: *mut *mut DdcrpFit) -> DdcrpStatus {
    guard(|| match read_str(config) {
        Ok(text) => run_fit(RunConfig::from_toml(text), out),
        Err(s) => s,
    })
}

/// Fit a bundled preset (`poisson-overlapping` or `old-faithful`). A
/// non-zero `iterations` replaces the preset's schedule together with
/// `burn_in`; zero keeps the preset schedule.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_preset(
    name: *const c_char,
    iterations: usize,
    burn_in: usize,
    out: *mut *mut DdcrpFit,
) -> DdcrpStatus {
    guard(|| {
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(text) = presets::toml(name) else {
            return fail(DdcrpStatus::Config, format!("unknown preset '{name}'"));
        };
        let mut overrides = Vec::new();
        if iterations > 0 {
            overrides.push(("sampler.iterations".to_string(), iterations.to_string()));
            overrides.push(("sampler.burn_in".to_string(), burn_in.to_string()));
        }
        run_fit(RunConfig::from_toml_with_overrides(text, &overrides), out)
    })
}

/// Release a fit handle. Null is ignored.
///
/// # Safety
/// `fit` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_free(fit: *mut DdcrpFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of observations.
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_num_observations(fit: *const DdcrpFit, out: *mut usize) -> DdcrpStatus {
    guard(|| put(fit_ref(fit).map(|f| f.out.dataset.y.len()), out))
}

/// Number of chains.
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_num_chains(fit: *const DdcrpFit, out: *mut usize) -> DdcrpStatus {
    guard(|| put(fit_ref(fit).map(|f| f.out.traces.len()), out))
}

unsafe fn chain<'a>(fit: *const DdcrpFit, chain: usize) -> Result<&'a ddcrp::trace::TraceStore, DdcrpStatus> {
    let f = fit_ref(fit)?;
    f.out
        .traces
        .get(chain)
        .ok_or_else(|| fail(DdcrpStatus::OutOfRange, format!("chain {chain} of {}", f.out.traces.len())))
}

/// Number of retained samples in `chain_index`.
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_num_samples(fit: *const DdcrpFit, chain_index: usize, out: *mut usize) -> DdcrpStatus {
    guard(|| put(chain(fit, chain_index).map(|t| t.len()), out))
}

/// Copy the cluster-count series of a chain into `buf` (`len` entries).
///
/// # Safety
/// `buf` must hold `len` writable `size_t` values.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_k_series(
    fit: *const DdcrpFit,
    chain_index: usize,
    buf: *mut usize,
    len: usize,
) -> DdcrpStatus {
    guard(|| {
        let t = match chain(fit, chain_index) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let ks: Vec<usize> = t.samples.iter().map(|s| s.k).collect();
        copy_out(&ks, buf, len)
    })
}

/// Copy the log-posterior series of a chain into `buf` (`len` entries).
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_log_post_series(
    fit: *const DdcrpFit,
    chain_index: usize,
    buf: *mut f64,
    len: usize,
) -> DdcrpStatus {
    guard(|| match chain(fit, chain_index) {
        Ok(t) => copy_out(&t.log_post_series(), buf, len),
        Err(s) => s,
    })
}

/// Copy the link vector of one retained sample into `buf` (`len` >= n).
///
/// # Safety
/// `buf` must hold `len` writable `size_t` values.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_assignments(
    fit: *const DdcrpFit,
    chain_index: usize,
    sample: usize,
    buf: *mut usize,
    len: usize,
) -> DdcrpStatus {
    guard(|| {
        let t = match chain(fit, chain_index) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match t.samples.get(sample) {
            Some(s) => copy_out(s.assignments.as_slice(), buf, len),
            None => fail(DdcrpStatus::OutOfRange, format!("sample {sample} of {}", t.len())),
        }
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize) -> DdcrpStatus {
    if buf.is_null() {
        return fail(DdcrpStatus::NullPointer, "null buffer");
    }
    if len < src.len() {
        return fail(
            DdcrpStatus::BufferTooSmall,
            format!("buffer holds {len}, need {}", src.len()),
        );
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    DdcrpStatus::Ok
}

/// Posterior mode of the cluster count, pooled over chains.
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_k_mode(fit: *const DdcrpFit, out: *mut usize) -> DdcrpStatus {
    guard(|| put(fit_ref(fit).map(|f| f.out.report.k_mode), out))
}

/// Pooled posterior probability that the cluster count equals `k`.
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_k_probability(fit: *const DdcrpFit, k: usize, out: *mut f64) -> DdcrpStatus {
    guard(|| {
        let p = fit_ref(fit).map(|f| f.out.report.k_posterior.get(&k).copied().unwrap_or(0.0));
        put(p, out)
    })
}

/// The run report as a newly allocated JSON string; release it with
/// [`ddcrp_string_free`].
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_fit_report_json(fit: *const DdcrpFit, out: *mut *mut c_char) -> DdcrpStatus {
    guard(|| {
        if out.is_null() {
            return fail(DdcrpStatus::NullPointer, "null output pointer");
        }
        let f = match fit_ref(fit) {
            Ok(f) => f,
            Err(s) => return s,
        };
        match serde_json::to_string(&f.out.report) {
            Ok(s) => {
                // JSON text never contains NUL.
                *out = CString::new(s).expect("json without NUL").into_raw();
                DdcrpStatus::Ok
            }
            Err(e) => fail(DdcrpStatus::Data, e.to_string()),
        }
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddcrp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
