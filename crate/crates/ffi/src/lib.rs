//! C ABI over `havok-core`.
//!
//! Every function returns a [`HavokStatus`]. On failure the message is kept
//! per thread and read with [`havok_last_error`]. Array outputs follow one
//! convention: the caller passes a buffer and its capacity, the library
//! always stores the needed length in `*len`, and returns
//! `HAVOK_BUFFER_TOO_SMALL` (writing nothing) when the capacity is short.
//! A NULL buffer with capacity 0 is therefore a size query.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use havok_core::embedding::{select_delay, select_dimension, EmbeddingConfig, FnnOptions};
use havok_core::forecast::{forcing_active, project_coordinates, simulate, Forcing};
use havok_core::havok::{fit_havok, FitOptions, HavokModel, RankPolicy};
use havok_core::stats::{fit_mle, ks_test_at, Family};
use havok_core::{Error, ErrorClass};

/// Status codes. Codes 2 to 4 match the `havok` CLI's exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HavokStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid parameter or option.
    Config = 2,
    /// Input data unusable: too short, constant, out of range, non-finite.
    Data = 3,
    /// A numerical procedure failed (singular system, no convergence).
    Numeric = 4,
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary. Please report it.
    Panic = 6,
}

/// How the forcing coordinate is supplied to [`havok_model_forecast`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HavokForcingMode {
    Measured = 0,
    Zero = 1,
    Held = 2,
}

/// Fitted model. Create with [`havok_model_fit`] or
/// [`havok_model_from_json`], release with [`havok_model_free`].
pub struct HavokModelHandle {
    model: HavokModel,
    /// Training forcing coordinate; empty for models loaded from JSON.
    forcing: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HavokStatus {
    match e.class() {
        ErrorClass::Config => HavokStatus::Config,
        ErrorClass::Data => HavokStatus::Data,
        ErrorClass::Numeric => HavokStatus::Numeric,
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Short,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult = std::result::Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> HavokStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HavokStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("`{what}` is NULL"));
            HavokStatus::NullPointer
        }
        Ok(Err(Failure::Short)) => {
            set_error("output buffer too small".into());
            HavokStatus::BufferTooSmall
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            HavokStatus::Panic
        }
    }
}

/// # Safety
/// `p` must point to `n` readable doubles unless `n == 0`.
unsafe fn input<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn handle<'a>(h: *const HavokModelHandle) -> Result<&'a HavokModelHandle, Failure> {
    h.as_ref().ok_or(Failure::Null("model"))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::Parameter(format!("`{what}` is not UTF-8"))))
}

/// Copy `src` to `dst` under the buffer convention described at the top.
unsafe fn emit<T: Copy>(src: &[T], dst: *mut T, cap: usize, len: *mut usize) -> FfiResult {
    *out(len, "len")? = src.len();
    if src.is_empty() {
        return Ok(());
    }
    if cap < src.len() {
        return Err(Failure::Short);
    }
    if dst.is_null() {
        return Err(Failure::Null("out"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Message of the last failure on this thread, or "" if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn havok_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn havok_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fit a forced linear model to `x[0..n]` sampled every `dt`.
///
/// `rank` is NULL (default 15), an integer string, `"hard-threshold"` or
/// `"energy:<fraction>"`.
///
/// # Safety
/// `x` must hold `n` doubles, `rank` must be NULL or NUL-terminated and
/// `model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn havok_model_fit(
    x: *const f64,
    n: usize,
    dt: f64,
    tau: usize,
    dim: usize,
    rank: *const c_char,
    lambda: f64,
    eps: f64,
    model: *mut *mut HavokModelHandle,
) -> HavokStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = ptr::null_mut();
        let x = input(x, n, "x")?;
        let rank = if rank.is_null() {
            FitOptions::default().rank
        } else {
            c_str(rank, "rank")?.parse::<RankPolicy>()?
        };
        let fit = fit_havok(
            x,
            dt,
            EmbeddingConfig::new(tau, dim)?,
            FitOptions { rank, lambda, eps },
        )?;
        let forcing = fit.forcing();
        *slot = Box::into_raw(Box::new(HavokModelHandle {
            model: fit.model,
            forcing,
        }));
        Ok(())
    })
}

/// Release a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn havok_model_free(model: *mut HavokModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of retained delay coordinates r (the last one is the forcing).
///
/// # Safety
/// `model` must be a live handle and `r` writable.
#[no_mangle]
pub unsafe extern "C" fn havok_model_rank(
    model: *const HavokModelHandle,
    r: *mut usize,
) -> HavokStatus {
    guard(|| {
        *out(r, "r")? = handle(model)?.model.r;
        Ok(())
    })
}

/// Linear block A, (r-1) x (r-1), row-major.
///
/// # Safety
/// Buffer convention; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn havok_model_dynamics(
    model: *const HavokModelHandle,
    out_a: *mut f64,
    cap: usize,
    len: *mut usize,
) -> HavokStatus {
    guard(|| {
        let a = &handle(model)?.model.a;
        let rows: Vec<f64> = a.transpose().iter().copied().collect();
        emit(&rows, out_a, cap, len)
    })
}

/// Forcing column B, length r-1.
///
/// # Safety
/// Buffer convention; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn havok_model_forcing_gain(
    model: *const HavokModelHandle,
    out_b: *mut f64,
    cap: usize,
    len: *mut usize,
) -> HavokStatus {
    guard(|| emit(handle(model)?.model.b.as_slice(), out_b, cap, len))
}

/// Full singular spectrum of the training Hankel matrix, descending.
///
/// # Safety
/// Buffer convention; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn havok_model_singular_values(
    model: *const HavokModelHandle,
    out_s: *mut f64,
    cap: usize,
    len: *mut usize,
) -> HavokStatus {
    guard(|| emit(&handle(model)?.model.singular_values, out_s, cap, len))
}

/// Training forcing coordinate v_r (empty for models loaded from JSON).
///
/// # Safety
/// Buffer convention; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn havok_model_forcing(
    model: *const HavokModelHandle,
    out_v: *mut f64,
    cap: usize,
    len: *mut usize,
) -> HavokStatus {
    guard(|| emit(&handle(model)?.forcing, out_v, cap, len))
}

/// Delay coordinates of new data `x[0..n]`, n_t x r row-major, where
/// n_t = n - (dim - 1) * tau.
///
/// # Safety
/// Buffer convention; `x` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn havok_model_project(
    model: *const HavokModelHandle,
    x: *const f64,
    n: usize,
    out_v: *mut f64,
    cap: usize,
    len: *mut usize,
) -> HavokStatus {
    guard(|| {
        let v = project_coordinates(&handle(model)?.model, input(x, n, "x")?)?;
        let rows: Vec<f64> = v.transpose().iter().copied().collect();
        emit(&rows, out_v, cap, len)
    })
}

/// Integrate the model for `steps` steps from `v0` (length r-1) and write
/// the reconstructed signal to `x_hat` (length `steps`).
///
/// With `HAVOK_FORCING_MODE_MEASURED`, `forcing` must hold at least `steps`
/// values; it is ignored otherwise.
///
/// # Safety
/// `v0` holds `v0_len` doubles, `forcing` holds `forcing_len` doubles and
/// `x_hat` has room for `steps` doubles.
#[no_mangle]
pub unsafe extern "C" fn havok_model_forecast(
    model: *const HavokModelHandle,
    v0: *const f64,
    v0_len: usize,
    mode: HavokForcingMode,
    forcing: *const f64,
    forcing_len: usize,
    steps: usize,
    x_hat: *mut f64,
) -> HavokStatus {
    guard(|| {
        let model = &handle(model)?.model;
        let v0 = input(v0, v0_len, "v0")?;
        let forcing = match mode {
            HavokForcingMode::Measured => {
                Forcing::Measured(input(forcing, forcing_len, "forcing")?)
            }
            HavokForcingMode::Zero => Forcing::Zero,
            HavokForcingMode::Held => Forcing::Held,
        };
        let r = simulate(model, v0, forcing, steps)?;
        let mut len = 0;
        emit(&r.x_hat, x_hat, steps, &mut len)
    })
}

/// Serialize a model to JSON. Release the string with [`havok_string_free`].
///
/// # Safety
/// `model` must be a live handle and `json` writable.
#[no_mangle]
pub unsafe extern "C" fn havok_model_to_json(
    model: *const HavokModelHandle,
    json: *mut *mut c_char,
) -> HavokStatus {
    guard(|| {
        let slot = out(json, "json")?;
        *slot = ptr::null_mut();
        let text = serde_json::to_string(&handle(model)?.model)
            .map_err(|e| Error::Schema(format!("cannot serialize model: {e}")))?;
        *slot = CString::new(text).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// Load a model written by [`havok_model_to_json`] or `havok fit`'s `model` field.
///
/// # Safety
/// `json` must be NUL-terminated and `model` writable.
#[no_mangle]
pub unsafe extern "C" fn havok_model_from_json(
    json: *const c_char,
    model: *mut *mut HavokModelHandle,
) -> HavokStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = ptr::null_mut();
        let m: HavokModel = serde_json::from_str(c_str(json, "json")?)
            .map_err(|e| Error::Schema(format!("invalid model JSON: {e}")))?;
        *slot = Box::into_raw(Box::new(HavokModelHandle {
            model: m,
            forcing: Vec::new(),
        }));
        Ok(())
    })
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn havok_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Half-open intervals `[start, end)` where |v| exceeds `eps`, merging
/// gaps of at most `merge_window` samples. Starts and ends are written to
/// separate buffers of capacity `cap`; `*count` receives the interval count.
///
/// # Safety
/// `v` holds `n` doubles; buffer convention for `starts` and `ends`.
#[no_mangle]
pub unsafe extern "C" fn havok_forcing_active(
    v: *const f64,
    n: usize,
    eps: f64,
    merge_window: usize,
    starts: *mut usize,
    ends: *mut usize,
    cap: usize,
    count: *mut usize,
) -> HavokStatus {
    guard(|| {
        let iv = forcing_active(input(v, n, "v")?, eps, merge_window);
        let s: Vec<usize> = iv.iter().map(|i| i.start).collect();
        let e: Vec<usize> = iv.iter().map(|i| i.end).collect();
        emit(&s, starts, cap, count)?;
        emit(&e, ends, cap, count)
    })
}

/// Delay at the first local minimum of the histogram AMI curve over
/// 1..=tau_max (`bins` equal-width bins).
///
/// # Safety
/// `x` holds `n` doubles and `tau` is writable.
#[no_mangle]
pub unsafe extern "C" fn havok_select_delay(
    x: *const f64,
    n: usize,
    tau_max: usize,
    bins: usize,
    tau: *mut usize,
) -> HavokStatus {
    guard(|| {
        let t = out(tau, "tau")?;
        *t = select_delay(input(x, n, "x")?, tau_max, bins)?.tau;
        Ok(())
    })
}

/// Embedding dimension from the false-nearest-neighbour curve over
/// d = 1..=d_max. Pass `r_tol` or `a_tol` <= 0 for the defaults.
///
/// # Safety
/// `x` holds `n` doubles and `dim` is writable.
#[no_mangle]
pub unsafe extern "C" fn havok_select_dimension(
    x: *const f64,
    n: usize,
    tau: usize,
    d_max: usize,
    drop_threshold: f64,
    r_tol: f64,
    a_tol: f64,
    dim: *mut usize,
) -> HavokStatus {
    guard(|| {
        let d = out(dim, "dim")?;
        let defaults = FnnOptions::default();
        let opts = FnnOptions {
            r_tol: if r_tol > 0.0 { r_tol } else { defaults.r_tol },
            a_tol: if a_tol > 0.0 { a_tol } else { defaults.a_tol },
        };
        *d = select_dimension(input(x, n, "x")?, tau, d_max, drop_threshold, opts)?.dim;
        Ok(())
    })
}

/// Maximum-likelihood fit of one family (e.g. "Normal", "GEV", "Weibull")
/// followed by a one-sample K-S test at `significance`.
///
/// Parameters are written in the family's documented order; `*n_params`
/// receives their count. `*passed` is 1 when the fit is not rejected.
///
/// # Safety
/// `samples` holds `n` doubles; buffer convention for `params`; the other
/// outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn havok_fit_distribution(
    samples: *const f64,
    n: usize,
    family: *const c_char,
    significance: f64,
    params: *mut f64,
    cap: usize,
    n_params: *mut usize,
    ks_statistic: *mut f64,
    p_value: *mut f64,
    passed: *mut i32,
) -> HavokStatus {
    guard(|| {
        let family: Family = c_str(family, "family")?.parse().map_err(Error::Parameter)?;
        let x = input(samples, n, "samples")?;
        let fit = fit_mle(x, family)?;
        let values: Vec<f64> = fit.dist.params().iter().map(|p| p.1).collect();
        emit(&values, params, cap, n_params)?;
        let ks = ks_test_at(x, &fit.dist, significance);
        *out(ks_statistic, "ks_statistic")? = ks.statistic;
        *out(p_value, "p_value")? = ks.p_value;
        *out(passed, "passed")? = i32::from(ks.decision == havok_core::stats::Decision::Pass);
        Ok(())
    })
}
