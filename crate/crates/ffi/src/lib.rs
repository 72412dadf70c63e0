//! C interface to `oversketch`.
//!
//! Matrices cross the boundary as opaque `OsMatrix` handles holding
//! row-major `double` data. Every fallible call returns an `OsStatus`; on
//! failure `os_last_error_message` describes what went wrong on this
//! thread. Handles returned through out-pointers are owned by the caller
//! and released with `os_matrix_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use oversketch::cost::{self, CostParams, CostReport};
use oversketch::multiply::{self, CodedStragglers, OverSketchOptions};
use oversketch::sim::{SimConfig, Simulator};
use oversketch::stats;
use oversketch::{DenseMatrix, Error};

/// Opaque matrix handle.
pub struct OsMatrix {
    inner: DenseMatrix,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A worker's inputs do not fit in its memory.
    Memory = 3,
    /// Too few results arrived to form the product.
    Stragglers = 4,
    /// The coded scheme could not decode the lost blocks.
    Recovery = 5,
    /// Relative error of an all-zero reference.
    Undefined = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OsScheme {
    Naive = 0,
    Blocked = 1,
    Oversketch = 2,
    CodedNaive = 3,
}

/// Multiplication settings. `block` is the chunk width for the naive and
/// coded schemes; `n_keep` and `e` only apply to OverSketch.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OsMultiplyOptions {
    pub scheme: OsScheme,
    pub block: usize,
    pub n_keep: usize,
    pub e: usize,
    pub seed: u64,
}

/// Simulated resource use of one run, or a cost-model prediction.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct OsRunStats {
    pub workers: u64,
    /// Summed worker seconds.
    pub compute_time: f64,
    /// Wave makespans plus invocation overhead; 0 for predictions.
    pub wall_clock: f64,
    pub dollars: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> OsStatus {
    match err {
        Error::InvalidArgument(_)
        | Error::InvalidConfiguration(_)
        | Error::Parse(_)
        | Error::InfeasibleProblem(_) => OsStatus::InvalidArgument,
        Error::MemoryBudget { .. } | Error::InfeasibleMemory(_) => OsStatus::Memory,
        Error::InsufficientResults { .. } => OsStatus::Stragglers,
        Error::RecoveryFailure { .. } => OsStatus::Recovery,
        Error::UndefinedRelativeError => OsStatus::Undefined,
        _ => OsStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), OsError>) -> OsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OsStatus::Ok,
        Ok(Err(OsError::Null(what))) => {
            set_error(format!("{what} is null"));
            OsStatus::NullPointer
        }
        Ok(Err(OsError::Lib(err))) => {
            set_error(err.to_string());
            status_of(&err)
        }
        Err(_) => {
            set_error("panic inside oversketch".into());
            OsStatus::Panic
        }
    }
}

enum OsError {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for OsError {
    fn from(e: Error) -> Self {
        OsError::Lib(e)
    }
}

unsafe fn matrix_ref<'a>(m: *const OsMatrix, what: &'static str) -> Result<&'a DenseMatrix, OsError> {
    m.as_ref().map(|m| &m.inner).ok_or(OsError::Null(what))
}

fn into_handle(m: DenseMatrix) -> *mut OsMatrix {
    Box::into_raw(Box::new(OsMatrix { inner: m }))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn os_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn os_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New `rows × cols` matrix copied from `data` (row-major, `rows · cols`
/// values), or zeros when `data` is null.
///
/// # Safety
/// `data` must be null or point to `rows · cols` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn os_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut OsMatrix,
) -> OsStatus {
    guard(|| {
        if out.is_null() {
            return Err(OsError::Null("out"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| OsError::Lib(Error::InvalidArgument("rows * cols overflows".into())))?;
        let m = if data.is_null() {
            DenseMatrix::zeros(rows, cols)
        } else {
            DenseMatrix::from_vec(rows, cols, std::slice::from_raw_parts(data, len).to_vec())?
        };
        *out = into_handle(m);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn os_matrix_free(m: *mut OsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn os_matrix_rows(m: *const OsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.rows())
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn os_matrix_cols(m: *const OsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.cols())
}

/// Copies the entries row-major into `out`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn os_matrix_copy_data(m: *const OsMatrix, out: *mut f64, len: usize) -> OsStatus {
    guard(|| {
        let m = matrix_ref(m, "matrix")?;
        if out.is_null() {
            return Err(OsError::Null("out"));
        }
        if len < m.len() {
            return Err(Error::InvalidArgument(format!("buffer holds {len} values, need {}", m.len())).into());
        }
        std::slice::from_raw_parts_mut(out, m.len()).copy_from_slice(m.as_slice());
        Ok(())
    })
}

/// `‖exact − approx‖_F / ‖exact‖_F`.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn os_frobenius_error(
    exact: *const OsMatrix,
    approx: *const OsMatrix,
    out: *mut f64,
) -> OsStatus {
    guard(|| {
        let (e, a) = (matrix_ref(exact, "exact")?, matrix_ref(approx, "approx")?);
        if out.is_null() {
            return Err(OsError::Null("out"));
        }
        *out = stats::frobenius_error(e, a)?;
        Ok(())
    })
}

/// Multiplies `a · b` on the simulated platform with the default straggler
/// model seeded from `opts.seed`. On success `*product` receives a new
/// handle; `stats` may be null.
///
/// # Safety
/// `a`, `b` must be live handles, `opts` and `product` valid pointers,
/// `stats` null or writable.
#[no_mangle]
pub unsafe extern "C" fn os_multiply(
    a: *const OsMatrix,
    b: *const OsMatrix,
    opts: *const OsMultiplyOptions,
    product: *mut *mut OsMatrix,
    stats: *mut OsRunStats,
) -> OsStatus {
    guard(|| {
        let (a, b) = (matrix_ref(a, "a")?, matrix_ref(b, "b")?);
        let opts = opts.as_ref().ok_or(OsError::Null("opts"))?;
        if product.is_null() {
            return Err(OsError::Null("product"));
        }
        let mut sim = Simulator::new(SimConfig::with_seed(opts.seed))?;
        let c = match opts.scheme {
            OsScheme::Naive => multiply::naive_multiply(a, b, opts.block, &mut sim)?.product,
            OsScheme::Blocked => multiply::blocked_multiply(a, b, opts.block, &mut sim)?.product,
            OsScheme::Oversketch => {
                let o = OverSketchOptions::new(opts.block, opts.n_keep, opts.e, opts.seed);
                multiply::oversketch_multiply(a, b, &o, &mut sim)?.product
            }
            OsScheme::CodedNaive => {
                multiply::coded_naive_multiply(a, b, opts.block, &mut sim, &CodedStragglers::Simulated)?.product
            }
        };
        if let Some(s) = stats.as_mut() {
            let measured = cost::measure_costs(sim.trace(), &CostParams::default());
            *s = OsRunStats {
                workers: measured.workers(),
                compute_time: sim.trace().compute_time(),
                wall_clock: sim.trace().wall_clock(),
                dollars: measured.dollars(),
            };
        }
        *product = into_handle(c);
        Ok(())
    })
}

/// Cost-model prediction for an `m × n` by `n × l` product. `memory` of 0
/// keeps the default worker memory; `block` of 0 lets the naive, blocked
/// and coded schemes size their chunks from memory.
///
/// # Safety
/// `opts` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn os_predict_cost(
    m: usize,
    n: usize,
    l: usize,
    opts: *const OsMultiplyOptions,
    memory: u64,
    out: *mut OsRunStats,
) -> OsStatus {
    guard(|| {
        let opts = opts.as_ref().ok_or(OsError::Null("opts"))?;
        let out = out.as_mut().ok_or(OsError::Null("out"))?;
        let mut params = CostParams::default();
        if memory > 0 {
            params = params.with_memory(memory);
        }
        let report: CostReport = match (opts.scheme, opts.block) {
            (OsScheme::Naive, 0) => cost::predict_naive(m, n, l, &params)?,
            (OsScheme::Naive, a) => cost::predict_naive_with(m, n, l, a, &params)?,
            (OsScheme::Blocked, 0) => cost::predict_blocked(m, n, l, &params)?,
            (OsScheme::Blocked, b) => cost::predict_blocked_with(m, n, l, b, &params)?,
            (OsScheme::CodedNaive, 0) => cost::predict_coded(m, n, l, &params)?,
            (OsScheme::CodedNaive, a) => cost::predict_coded_with(m, n, l, a, &params)?,
            (OsScheme::Oversketch, b) => cost::predict_oversketch(m, n, l, b, opts.n_keep, opts.e, &params)?,
        };
        *out = OsRunStats {
            workers: report.workers(),
            compute_time: report.c_total(),
            wall_clock: 0.0,
            dollars: report.dollars(),
        };
        Ok(())
    })
}
