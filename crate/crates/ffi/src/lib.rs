//! C ABI over `pronyif`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_create`
//! functions and released with the matching `*_free`. Fallible calls return a
//! [`PronyifStatus`]; on failure [`pronyif_last_error`] holds a message for
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pronyif::config::Config;
use pronyif::linalg::C64;
use pronyif::pipeline::{self, Estimate, Method, PipelineConfig};
use pronyif::signalgen::{self, SampledSignal, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PronyifStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    OutOfRange = 4,
    Panic = 5,
}

/// Opaque sampled signal.
pub struct PronyifSignal(SampledSignal);

/// Opaque pipeline configuration.
pub struct PronyifConfig(PipelineConfig);

/// Opaque result of one estimation run.
pub struct PronyifEstimate(Estimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &pronyif::Error) -> PronyifStatus {
    if e.is_numerical() {
        PronyifStatus::Numerical
    } else {
        PronyifStatus::InvalidArgument
    }
}

fn guard(f: impl FnOnce() -> Result<(), PronyifStatus>) -> PronyifStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PronyifStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            PronyifStatus::Panic
        }
    }
}

fn fail(e: pronyif::Error) -> PronyifStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> PronyifStatus {
    set_error(format!("{what} is null"));
    PronyifStatus::NullPointer
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, PronyifStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        PronyifStatus::InvalidArgument
    })
}

fn emit<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pronyif_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pronyif_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a signal from `len` interleaved `(re, im)` pairs.
///
/// # Safety
/// `interleaved` must point to `2 * len` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pronyif_signal_from_samples(
    interleaved: *const f64,
    len: usize,
    sample_rate: f64,
    out: *mut *mut PronyifSignal,
) -> PronyifStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if interleaved.is_null() {
            return Err(null("interleaved"));
        }
        if len == 0 || !(sample_rate > 0.0) {
            set_error("signal must be non-empty with a positive sample rate");
            return Err(PronyifStatus::InvalidArgument);
        }
        let raw = std::slice::from_raw_parts(interleaved, 2 * len);
        let samples = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        emit(out, PronyifSignal(SampledSignal { samples, sample_rate }));
        Ok(())
    })
}

/// Synthesizes a built-in scenario (`tones`, `parallel-chirps`,
/// `partial-chirps`) with `sample_count` samples. `snr_db` may be `INFINITY`.
///
/// # Safety
/// `scenario` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pronyif_signal_scenario(
    scenario: *const c_char,
    sample_count: usize,
    snr_db: f64,
    seed: u64,
    out: *mut *mut PronyifSignal,
) -> PronyifStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = c_str(scenario, "scenario")?;
        let sc = Scenario::from_name(name).ok_or_else(|| {
            set_error(format!("unknown scenario {name:?}"));
            PronyifStatus::InvalidArgument
        })?;
        let mut spec = sc.spec();
        spec.sample_count = sample_count;
        let clean = signalgen::synthesize(&spec).map_err(fail)?;
        let noisy = signalgen::add_noise(&clean, snr_db, seed).map_err(fail)?;
        emit(out, PronyifSignal(noisy));
        Ok(())
    })
}

/// Number of samples, 0 for a null handle.
///
/// # Safety
/// `signal` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pronyif_signal_len(signal: *const PronyifSignal) -> usize {
    signal.as_ref().map_or(0, |s| s.0.len())
}

/// Copies up to `cap` interleaved pairs into `dst`; returns the pair count
/// written through `written`.
///
/// # Safety
/// `dst` must have room for `2 * cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pronyif_signal_copy(
    signal: *const PronyifSignal,
    dst: *mut f64,
    cap: usize,
    written: *mut usize,
) -> PronyifStatus {
    guard(|| {
        let s = signal.as_ref().ok_or_else(|| null("signal"))?;
        if dst.is_null() {
            return Err(null("dst"));
        }
        let n = cap.min(s.0.len());
        let d = std::slice::from_raw_parts_mut(dst, 2 * n);
        for (pair, v) in d.chunks_exact_mut(2).zip(&s.0.samples) {
            pair[0] = v.re;
            pair[1] = v.im;
        }
        if let Some(w) = written.as_mut() {
            *w = n;
        }
        Ok(())
    })
}

/// # Safety
/// `signal` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pronyif_signal_free(signal: *mut PronyifSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

/// Default configuration (cad-spline, σ = 0.02 s).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pronyif_config_new(out: *mut *mut PronyifConfig) -> PronyifStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit(out, PronyifConfig(PipelineConfig::default()));
        Ok(())
    })
}

/// Parses the `[pipeline]` section of a TOML document.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pronyif_config_from_toml(
    toml: *const c_char,
    out: *mut *mut PronyifConfig,
) -> PronyifStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = c_str(toml, "toml")?;
        let cfg = Config::parse(text).and_then(|c| c.pipeline_config()).map_err(fail)?;
        emit(out, PronyifConfig(cfg));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle; `method` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pronyif_config_set_method(cfg: *mut PronyifConfig, method: *const c_char) -> PronyifStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let name = c_str(method, "method")?;
        c.0.method = Method::from_name(name).map_err(fail)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pronyif_config_set_sigma(cfg: *mut PronyifConfig, sigma: f64) -> PronyifStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        if !(sigma > 0.0) {
            set_error(format!("sigma = {sigma} must be positive"));
            return Err(PronyifStatus::InvalidArgument);
        }
        c.0.sigma = sigma;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pronyif_config_free(cfg: *mut PronyifConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the full estimator for `order` modes.
///
/// Returns `PRONYIF_STATUS_NUMERICAL` if any mode failed refinement; the
/// handle is still produced in that case and the failed modes read as NaN.
///
/// # Safety
/// `signal` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pronyif_estimate(
    signal: *const PronyifSignal,
    order: usize,
    cfg: *const PronyifConfig,
    out: *mut *mut PronyifEstimate,
) -> PronyifStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = signal.as_ref().ok_or_else(|| null("signal"))?;
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let (_, est) = pipeline::run_algorithm1(&s.0, order, &c.0).map_err(fail)?;
        let failure = est.modes.iter().find_map(|m| m.failure.clone());
        emit(out, PronyifEstimate(est));
        match failure {
            Some(f) => {
                set_error(f);
                Err(PronyifStatus::Numerical)
            }
            None => Ok(()),
        }
    })
}

/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pronyif_estimate_frames(est: *const PronyifEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.frame_estimates.len())
}

/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pronyif_estimate_modes(est: *const PronyifEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.modes.len())
}

/// Frames at each end excluded from scoring.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pronyif_estimate_margin(est: *const PronyifEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.margin)
}

/// Copies the final IF estimate of `mode` (Hz per frame) into `dst`, which
/// must hold `pronyif_estimate_frames(est)` doubles.
///
/// # Safety
/// `est` must be a live handle; `dst` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pronyif_estimate_copy_mode(
    est: *const PronyifEstimate,
    mode: usize,
    dst: *mut f64,
    cap: usize,
) -> PronyifStatus {
    guard(|| {
        let e = est.as_ref().ok_or_else(|| null("est"))?;
        if dst.is_null() {
            return Err(null("dst"));
        }
        let m = e.0.modes.get(mode).ok_or_else(|| {
            set_error(format!("mode {mode} out of range ({} modes)", e.0.modes.len()));
            PronyifStatus::OutOfRange
        })?;
        if cap < m.estimate.len() {
            set_error(format!("buffer holds {cap} values, need {}", m.estimate.len()));
            return Err(PronyifStatus::OutOfRange);
        }
        std::slice::from_raw_parts_mut(dst, m.estimate.len()).copy_from_slice(&m.estimate);
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pronyif_estimate_free(est: *mut PronyifEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}
