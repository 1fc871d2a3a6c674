//! C interface to svdsim.
//!
//! Matrices and SVD models are opaque handles created and destroyed through
//! this API. Every function returns an [`SvdsimStatus`]; on failure a message
//! is kept per thread and can be read with [`svdsim_last_error`]. Panics are
//! caught at the boundary and reported as `SVDSIM_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use svdsim::matrix_store::{self, DataMatrix, MatrixFormat, PreprocessOptions};
use svdsim::noise::AmplitudeMode;
use svdsim::qsim::{self, CountMode, ProbeMode};
use svdsim::svd_oracle::{compute_svd, SvdModel, DEFAULT_RANK_TOL};
use svdsim::Error;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdsimStatus {
    SvdsimOk = 0,
    SvdsimNullPointer = 1,
    SvdsimInvalidArgument = 2,
    SvdsimIo = 3,
    SvdsimFormat = 4,
    SvdsimNumeric = 5,
    SvdsimShape = 6,
    SvdsimResolution = 7,
    SvdsimEmptyRetention = 8,
    SvdsimBufferTooSmall = 9,
    SvdsimOther = 10,
    SvdsimPanic = 11,
}

/// Dense real matrix with row norms and Frobenius norm precomputed.
pub struct SvdsimMatrix {
    inner: DataMatrix,
}

/// Thin SVD of a matrix.
pub struct SvdsimModel {
    inner: SvdModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SvdsimStatus {
    match e {
        Error::Io { .. } => SvdsimStatus::SvdsimIo,
        Error::Format { .. } | Error::Structure(_) | Error::Serde(_) => SvdsimStatus::SvdsimFormat,
        Error::Numeric(_) | Error::DivideByZero(_) | Error::UndefinedState(_) => SvdsimStatus::SvdsimNumeric,
        Error::Shape { .. } => SvdsimStatus::SvdsimShape,
        Error::Resolution { .. } => SvdsimStatus::SvdsimResolution,
        Error::EmptyRetention { .. } => SvdsimStatus::SvdsimEmptyRetention,
        Error::InvalidParameter { .. } | Error::Empty(_) | Error::NotNormalized(_) => {
            SvdsimStatus::SvdsimInvalidArgument
        }
        _ => SvdsimStatus::SvdsimOther,
    }
}

struct Fail(SvdsimStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SvdsimStatus::SvdsimNullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SvdsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SvdsimStatus::SvdsimOk
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside svdsim");
            SvdsimStatus::SvdsimPanic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failure on this thread; empty after a success. The
/// pointer stays valid until the next svdsim call on the same thread.
#[no_mangle]
pub extern "C" fn svdsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds an `n x m` matrix from row-major `data` of length `n * m`.
///
/// # Safety
/// `data` must point to `n * m` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_matrix_from_rows(
    data: *const f64,
    n: usize,
    m: usize,
    out: *mut *mut SvdsimMatrix,
) -> SvdsimStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = n
            .checked_mul(m)
            .ok_or_else(|| Fail(SvdsimStatus::SvdsimInvalidArgument, "n * m overflows".into()))?;
        let slice = std::slice::from_raw_parts(data, len);
        let inner = DataMatrix::from_row_slice(n, m, slice)?;
        write(out, boxed(SvdsimMatrix { inner }), "out")
    })
}

/// Loads a numeric CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_matrix_load_csv(
    path: *const c_char,
    has_header: bool,
    out: *mut *mut SvdsimMatrix,
) -> SvdsimStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(SvdsimStatus::SvdsimInvalidArgument, "path is not UTF-8".into()))?;
        let inner = matrix_store::load_matrix(Path::new(p), MatrixFormat::Csv, has_header)?;
        write(out, boxed(SvdsimMatrix { inner }), "out")
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn svdsim_matrix_free(m: *mut SvdsimMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_matrix_shape(
    m: *const SvdsimMatrix,
    rows: *mut usize,
    cols: *mut usize,
) -> SvdsimStatus {
    guard(|| {
        let (n, c) = deref(m, "matrix")?.inner.shape();
        write(rows, n, "rows")?;
        write(cols, c, "cols")
    })
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_matrix_frobenius(m: *const SvdsimMatrix, out: *mut f64) -> SvdsimStatus {
    guard(|| write(out, deref(m, "matrix")?.inner.frobenius(), "out"))
}

/// Column centering and/or division by the largest singular value, into a
/// new handle.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_matrix_preprocess(
    m: *const SvdsimMatrix,
    center: bool,
    spectral_normalize: bool,
    out: *mut *mut SvdsimMatrix,
) -> SvdsimStatus {
    guard(|| {
        let opts = PreprocessOptions {
            center,
            spectral_normalize,
        };
        let inner = matrix_store::preprocess(&deref(m, "matrix")?.inner, opts)?;
        write(out, boxed(SvdsimMatrix { inner }), "out")
    })
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_svd(m: *const SvdsimMatrix, out: *mut *mut SvdsimModel) -> SvdsimStatus {
    guard(|| {
        let inner = compute_svd(&deref(m, "matrix")?.inner, DEFAULT_RANK_TOL)?;
        write(out, boxed(SvdsimModel { inner }), "out")
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn svdsim_model_free(s: *mut SvdsimModel) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_model_rank(s: *const SvdsimModel, out: *mut usize) -> SvdsimStatus {
    guard(|| write(out, deref(s, "model")?.inner.rank(), "out"))
}

/// Copies the singular values (descending) into `buf`. `written` receives
/// the rank; if `cap` is smaller the call fails with
/// `SVDSIM_BUFFER_TOO_SMALL` and nothing is copied.
///
/// # Safety
/// `buf` must have room for `cap` doubles (may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn svdsim_model_sigmas(
    s: *const SvdsimModel,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SvdsimStatus {
    guard(|| {
        let sig = deref(s, "model")?.inner.sigmas();
        write(written, sig.len(), "written")?;
        if cap < sig.len() {
            return Err(Fail(
                SvdsimStatus::SvdsimBufferTooSmall,
                format!("need room for {} values, got {cap}", sig.len()),
            ));
        }
        if !sig.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(sig.as_ptr(), buf, sig.len());
        }
        Ok(())
    })
}

/// Number of singular values at least `theta`, no rounding.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_count_retained_exact(
    s: *const SvdsimModel,
    theta: f64,
    out: *mut usize,
) -> SvdsimStatus {
    guard(|| {
        let r = qsim::count_retained(&deref(s, "model")?.inner, theta, 0.0, CountMode::Exact, 0.0, 0)?;
        write(out, r.k, "out")
    })
}

/// Sum of the factor score ratios of singular values at least `theta`.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_check_fsr_sum_exact(
    s: *const SvdsimModel,
    theta: f64,
    out: *mut f64,
) -> SvdsimStatus {
    guard(|| {
        let r = qsim::check_fsr_sum(&deref(s, "model")?.inner, theta, 0.0, 0.0, AmplitudeMode::Exact, 0)?;
        write(out, r.p_est, "out")
    })
}

/// Threshold search with exact probes. `found` is false when no grid
/// threshold reaches `p` within `eta`; `theta` is then left at 0.
///
/// # Safety
/// `s` must be a live handle; the output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_binary_search(
    s: *const SvdsimModel,
    p: f64,
    eps: f64,
    eta: f64,
    found: *mut bool,
    theta: *mut f64,
    iterations: *mut u32,
) -> SvdsimStatus {
    guard(|| {
        let r = qsim::binary_search_threshold(&deref(s, "model")?.inner, p, eps, eta, ProbeMode::Exact, 0)?;
        write(found, r.theta.is_some(), "found")?;
        write(theta, r.theta.unwrap_or(0.0), "theta")?;
        write(iterations, r.iterations, "iterations")
    })
}

/// Measurements needed to see every retained singular vector, averaged
/// over `trials` seeded runs.
///
/// # Safety
/// `s` must be a live handle; the output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn svdsim_coupon(
    s: *const SvdsimModel,
    theta: f64,
    eps: f64,
    trials: usize,
    seed: u64,
    mean: *mut f64,
    std: *mut f64,
    benchmark: *mut f64,
) -> SvdsimStatus {
    guard(|| {
        let c = qsim::coupon_collector_trials(&deref(s, "model")?.inner, theta, eps, trials, seed)?;
        write(mean, c.mean, "mean")?;
        write(std, c.std, "std")?;
        write(benchmark, c.benchmark, "benchmark")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::EmptyRetention { theta: 1.0 }), SvdsimStatus::SvdsimEmptyRetention);
        assert_eq!(
            status_of(&Error::Shape {
                expected: (1, 1),
                got: (2, 2)
            }),
            SvdsimStatus::SvdsimShape
        );
    }

    #[test]
    fn panics_are_contained() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, SvdsimStatus::SvdsimPanic);
        let msg = unsafe { CStr::from_ptr(svdsim_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "panic inside svdsim");
    }
}
