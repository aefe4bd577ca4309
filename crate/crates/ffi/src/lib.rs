//! C ABI over `sinksort`.
//!
//! Every fallible function returns a [`SinksortStatus`] code; on failure the
//! message is available from [`sinksort_last_error`] on the same thread.
//! Inputs are never written to. Results come back in a [`SinksortArray`]
//! that the caller releases with [`sinksort_array_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sinksort::losses::{soft_quantile, soft_topk_loss, QuantileSpec, TopKLossSpec};
use sinksort::sinkhorn::{soft_rank_sort_batched, SinkhornConfig, SinkhornMode, SoftSortConfig};
use sinksort::{CostSpec, DiscreteMeasure, Error, Squash, TargetDescriptor};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinksortStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    /// Batch is empty or dimensions are zero.
    Shape = 3,
    NotConverged = 4,
    Numerical = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinksortSquash {
    Logistic = 0,
    Arctan = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinksortMode {
    LogDomain = 0,
    Multiplicative = 1,
}

/// Solver options. Create with [`sinksort_options_new`].
#[derive(Debug, Clone)]
pub struct SinksortOptions {
    config: SoftSortConfig,
    require_convergence: bool,
}

impl Default for SinksortOptions {
    fn default() -> Self {
        Self {
            config: SoftSortConfig::default(),
            require_convergence: true,
        }
    }
}

/// Row-major `rows x cols` block of doubles owned by the library.
#[derive(Debug)]
pub struct SinksortArray {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SinksortStatus {
    match e {
        Error::NotConverged { .. } => SinksortStatus::NotConverged,
        e if e.is_numerical() => SinksortStatus::Numerical,
        _ => SinksortStatus::InvalidArgument,
    }
}

struct Failure(SinksortStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SinksortStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SinksortStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SinksortStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SinksortStatus::NullPointer, format!("{what} is null"))
}

fn options(opts: *const SinksortOptions, fallback: &SinksortOptions) -> &SinksortOptions {
    // SAFETY: the caller passes either null or a pointer from `sinksort_options_new`.
    unsafe { opts.as_ref() }.unwrap_or(fallback)
}

/// # Safety
/// `data` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sinksort_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    VERSION.as_ptr()
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn sinksort_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Options with library defaults (`epsilon = 1e-2`, `eta = 1e-3`,
/// `max_iters = 5000`, squared cost, logistic squash, log domain).
#[no_mangle]
pub extern "C" fn sinksort_options_new() -> *mut SinksortOptions {
    Box::into_raw(Box::default())
}

/// # Safety
/// `opts` must be null or come from [`sinksort_options_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_free(opts: *mut SinksortOptions) {
    if !opts.is_null() {
        drop(Box::from_raw(opts));
    }
}

/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
unsafe fn update(
    opts: *mut SinksortOptions,
    f: impl FnOnce(&mut SinksortOptions) -> Result<(), Failure>,
) -> SinksortStatus {
    guard(|| f(opts.as_mut().ok_or_else(|| null("options"))?))
}

fn update_sinkhorn(
    o: &mut SinksortOptions,
    f: impl FnOnce(SinkhornConfig) -> SinkhornConfig,
) -> Result<(), Failure> {
    let sinkhorn = f(o.config.sinkhorn);
    sinkhorn.validate()?;
    o.config.sinkhorn = sinkhorn;
    Ok(())
}

/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_set_epsilon(
    opts: *mut SinksortOptions,
    value: f64,
) -> SinksortStatus {
    update(opts, |o| update_sinkhorn(o, |s| s.with_epsilon(value)))
}

/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_set_eta(
    opts: *mut SinksortOptions,
    value: f64,
) -> SinksortStatus {
    update(opts, |o| update_sinkhorn(o, |s| s.with_eta(value)))
}

/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_set_max_iters(
    opts: *mut SinksortOptions,
    value: usize,
) -> SinksortStatus {
    update(opts, |o| update_sinkhorn(o, |s| s.with_max_iters(value)))
}

/// Exponent `p` of the cost `|x - y|^p`.
///
/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_set_cost_p(
    opts: *mut SinksortOptions,
    value: f64,
) -> SinksortStatus {
    update(opts, |o| {
        o.config.cost = CostSpec::abs_power(value)?;
        Ok(())
    })
}

/// A [`SinksortSquash`] value. Selectors arrive as plain ints: an
/// out-of-range C enum value must not reach a Rust enum.
///
/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_set_squash(
    opts: *mut SinksortOptions,
    value: i32,
) -> SinksortStatus {
    update(opts, |o| {
        o.config.squash = match value {
            v if v == SinksortSquash::Logistic as i32 => Squash::Logistic,
            v if v == SinksortSquash::Arctan as i32 => Squash::Arctan,
            v => {
                return Err(Failure(
                    SinksortStatus::InvalidArgument,
                    format!("unknown squash {v}"),
                ))
            }
        };
        Ok(())
    })
}

/// A [`SinksortMode`] value.
///
/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_set_mode(
    opts: *mut SinksortOptions,
    value: i32,
) -> SinksortStatus {
    update(opts, |o| {
        o.config.sinkhorn.mode = match value {
            v if v == SinksortMode::LogDomain as i32 => SinkhornMode::LogDomain,
            v if v == SinksortMode::Multiplicative as i32 => SinkhornMode::Multiplicative,
            v => {
                return Err(Failure(
                    SinksortStatus::InvalidArgument,
                    format!("unknown mode {v}"),
                ))
            }
        };
        Ok(())
    })
}

/// Nonzero makes unconverged solves fail with `NotConverged` (the default);
/// zero returns the last iterate instead.
///
/// # Safety
/// `opts` must be null or a live handle from [`sinksort_options_new`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_options_set_require_convergence(
    opts: *mut SinksortOptions,
    value: i32,
) -> SinksortStatus {
    update(opts, |o| {
        o.require_convergence = value != 0;
        Ok(())
    })
}

/// # Safety
/// `array` must be null or come from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn sinksort_array_free(array: *mut SinksortArray) {
    if !array.is_null() {
        drop(Box::from_raw(array));
    }
}

/// # Safety
/// `array` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sinksort_array_rows(array: *const SinksortArray) -> usize {
    array.as_ref().map_or(0, |a| a.rows)
}

/// # Safety
/// `array` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sinksort_array_cols(array: *const SinksortArray) -> usize {
    array.as_ref().map_or(0, |a| a.cols)
}

/// Pointer to `rows * cols` row-major doubles, valid until the array is freed.
///
/// # Safety
/// `array` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sinksort_array_data(array: *const SinksortArray) -> *const f64 {
    array.as_ref().map_or(ptr::null(), |a| a.data.as_ptr())
}

/// # Safety
/// Pointer arguments must be valid for the stated lengths.
#[allow(clippy::too_many_arguments)]
unsafe fn batched(
    opts: *const SinksortOptions,
    x: *const f64,
    batch: usize,
    n: usize,
    target_weights: *const f64,
    m: usize,
    out: *mut *mut SinksortArray,
    ranks: bool,
) -> SinksortStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if batch == 0 || n == 0 {
            return Err(Failure(
                SinksortStatus::Shape,
                format!("batch shape {batch} x {n} is empty"),
            ));
        }
        let x = slice(x, batch * n, "x")?;
        let fallback = SinksortOptions::default();
        let o = options(opts, &fallback);
        let target = if target_weights.is_null() {
            TargetDescriptor::uniform_grid(if m == 0 { n } else { m })?
        } else {
            if m == 0 {
                return Err(Failure(
                    SinksortStatus::Shape,
                    "target weights given with m = 0".into(),
                ));
            }
            TargetDescriptor::grid_with_weights(
                slice(target_weights, m, "target_weights")?.to_vec(),
            )?
        };
        let sources = x
            .chunks(n)
            .map(|row| DiscreteMeasure::uniform(row.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let results = soft_rank_sort_batched(&sources, &target, &o.config)?;
        if o.require_convergence {
            if let Some(r) = results.iter().find(|r| !r.converged) {
                return Err(Error::NotConverged {
                    iterations: r.iterations_used,
                    marginal_error: r.marginal_error,
                }
                .into());
            }
        }
        let cols = if ranks { n } else { target.len() };
        let data: Vec<f64> = results
            .into_iter()
            .flat_map(|r| if ranks { r.s_ranks } else { r.s_sorts })
            .collect();
        *out = Box::into_raw(Box::new(SinksortArray {
            data,
            rows: batch,
            cols,
        }));
        Ok(())
    })
}

/// Soft ranks of `batch` rows of length `n` (row-major `x`), with uniform
/// source weights. The target is the regular grid of `m` points
/// (`m = 0` means `n`) weighted by `target_weights`, or uniformly when it is
/// null. `opts` may be null for defaults. Writes a `batch x n` array to `out`.
///
/// # Safety
/// `x` must hold `batch * n` doubles; `target_weights`, if not null, `m`.
#[no_mangle]
pub unsafe extern "C" fn sinksort_s_rank_batched(
    opts: *const SinksortOptions,
    x: *const f64,
    batch: usize,
    n: usize,
    target_weights: *const f64,
    m: usize,
    out: *mut *mut SinksortArray,
) -> SinksortStatus {
    batched(opts, x, batch, n, target_weights, m, out, true)
}

/// Soft sorts; same conventions as [`sinksort_s_rank_batched`], writing a
/// `batch x m` array.
///
/// # Safety
/// As for [`sinksort_s_rank_batched`].
#[no_mangle]
pub unsafe extern "C" fn sinksort_s_sort_batched(
    opts: *const SinksortOptions,
    x: *const f64,
    batch: usize,
    n: usize,
    target_weights: *const f64,
    m: usize,
    out: *mut *mut SinksortArray,
) -> SinksortStatus {
    batched(opts, x, batch, n, target_weights, m, out, false)
}

/// Soft `tau`-quantile of `n` values with filler mass `t`. `epsilon`,
/// `eta` and `max_iters` come from `opts` (null for defaults).
///
/// # Safety
/// `x` must hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sinksort_soft_quantile(
    opts: *const SinksortOptions,
    x: *const f64,
    n: usize,
    tau: f64,
    t: f64,
    out: *mut f64,
) -> SinksortStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = slice(x, n, "x")?;
        let fallback = SinksortOptions::default();
        let o = options(opts, &fallback);
        let s = &o.config.sinkhorn;
        let mut spec = QuantileSpec::new(tau, t, s.epsilon)?
            .with_eta(s.eta)
            .with_max_iters(s.max_iters);
        spec.cost = o.config.cost;
        spec.squash = o.config.squash;
        *out = soft_quantile(x, &spec)?;
        Ok(())
    })
}

/// Soft top-`k` loss of `n` class scores for the zero-based `label`.
///
/// # Safety
/// `scores` must hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sinksort_soft_topk_loss(
    opts: *const SinksortOptions,
    scores: *const f64,
    n: usize,
    label: usize,
    k: usize,
    out: *mut f64,
) -> SinksortStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = slice(scores, n, "scores")?;
        let fallback = SinksortOptions::default();
        let o = options(opts, &fallback);
        let s = &o.config.sinkhorn;
        let mut spec = TopKLossSpec::new(n, k)?.with_epsilon(s.epsilon);
        spec.eta = s.eta;
        spec.max_iters = s.max_iters;
        spec.cost = o.config.cost;
        spec.squash = o.config.squash;
        *out = soft_topk_loss(scores, label, &spec)?;
        Ok(())
    })
}
