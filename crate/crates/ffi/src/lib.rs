//! C ABI over the satgnn toolkit.
//!
//! Formulas and models are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`SatgnnStatus`]; on failure the
//! message is available from [`satgnn_last_error`] on the same thread.
//! Assignments cross the boundary as one byte per variable (0 = false).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use satgnn::cnf::{self, CnfFormula};
use satgnn::infer::{self, SolveOptions};
use satgnn::logic::{self, SatResult};
use satgnn::model::Model;
use satgnn::{train, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SatgnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Checkpoint = 5,
    BudgetExceeded = 6,
    /// A caller buffer is shorter than the variable count.
    BufferTooSmall = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
    Internal = 9,
}

/// Opaque CNF formula.
pub struct SatgnnFormula(CnfFormula);

/// Opaque trained model.
pub struct SatgnnModel(Model<f32>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SatgnnStatus {
    match e {
        Error::Parse { .. } => SatgnnStatus::Parse,
        Error::Io { .. } => SatgnnStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => SatgnnStatus::Checkpoint,
        Error::BudgetExceeded { .. } => SatgnnStatus::BudgetExceeded,
        Error::InvalidArgument(_) | Error::LengthMismatch { .. } => SatgnnStatus::InvalidArgument,
        _ => SatgnnStatus::Internal,
    }
}

struct Fail(SatgnnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let mut msg = e.to_string();
        if let Some(src) = std::error::Error::source(&e) {
            msg = format!("{msg}: {src}");
        }
        Fail(status_of(&e), msg)
    }
}

fn fail(status: SatgnnStatus, msg: &str) -> Fail {
    Fail(status, msg.to_string())
}

/// Run `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> SatgnnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SatgnnStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SatgnnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(SatgnnStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SatgnnStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

unsafe fn formula_arg<'a>(f: *const SatgnnFormula) -> Result<&'a CnfFormula, Fail> {
    f.as_ref()
        .map(|h| &h.0)
        .ok_or_else(|| fail(SatgnnStatus::NullPointer, "formula handle is null"))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| fail(SatgnnStatus::NullPointer, &format!("{what} is null")))
}

/// Copy `values` into a caller buffer of `len` bytes; null skips the copy.
unsafe fn write_values(values: &[bool], out: *mut u8, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Ok(());
    }
    if len < values.len() {
        return Err(fail(
            SatgnnStatus::BufferTooSmall,
            &format!("assignment buffer holds {len} values but {} are needed", values.len()),
        ));
    }
    for (i, &v) in values.iter().enumerate() {
        *out.add(i) = v as u8;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn satgnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn satgnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse DIMACS text into a new formula handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn satgnn_formula_parse_dimacs(
    text: *const c_char,
    out: *mut *mut SatgnnFormula,
) -> SatgnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = cnf::parse_dimacs(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(SatgnnFormula(f)));
        Ok(())
    })
}

/// Build a formula from `len` DIMACS literals where each clause ends in 0.
///
/// # Safety
/// `lits` must point to `len` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn satgnn_formula_from_literals(
    num_vars: usize,
    lits: *const i64,
    len: usize,
    out: *mut *mut SatgnnFormula,
) -> SatgnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if lits.is_null() && len > 0 {
            return Err(fail(SatgnnStatus::NullPointer, "literal array is null"));
        }
        let lits = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(lits, len)
        };
        if lits.last().is_some_and(|&l| l != 0) {
            return Err(fail(
                SatgnnStatus::InvalidArgument,
                "the last clause is not terminated by 0",
            ));
        }
        let clauses: Vec<&[i64]> = lits.split(|&l| l == 0).collect();
        let clauses = &clauses[..clauses.len().saturating_sub(1)];
        let f = CnfFormula::from_dimacs_clauses(num_vars, clauses)?;
        *out = Box::into_raw(Box::new(SatgnnFormula(f)));
        Ok(())
    })
}

/// Release a formula handle. Null is ignored.
///
/// # Safety
/// `f` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn satgnn_formula_free(f: *mut SatgnnFormula) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Variable count of a formula; 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn satgnn_formula_num_vars(f: *const SatgnnFormula) -> usize {
    f.as_ref().map_or(0, |h| h.0.num_vars())
}

/// Clause count of a formula; 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn satgnn_formula_num_clauses(f: *const SatgnnFormula) -> usize {
    f.as_ref().map_or(0, |h| h.0.num_clauses())
}

/// Number of clauses left unsatisfied by `values` (`len` bytes).
///
/// # Safety
/// `values` must point to `len` readable bytes and `out_gap` be writable.
#[no_mangle]
pub unsafe extern "C" fn satgnn_formula_gap(
    f: *const SatgnnFormula,
    values: *const u8,
    len: usize,
    out_gap: *mut usize,
) -> SatgnnStatus {
    guard(|| {
        let f = formula_arg(f)?;
        let out = out_arg(out_gap, "out_gap")?;
        if values.is_null() && len > 0 {
            return Err(fail(SatgnnStatus::NullPointer, "values is null"));
        }
        if len != f.num_vars() {
            return Err(Error::LengthMismatch {
                expected: f.num_vars(),
                got: len,
            }
            .into());
        }
        let v: Vec<bool> = (0..len).map(|i| *values.add(i) != 0).collect();
        *out = f.gap(&v);
        Ok(())
    })
}

/// Exact satisfiability check. On SAT the witness is written to `out_values`
/// when it is non-null.
///
/// # Safety
/// `out_sat` must be writable; `out_values` null or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn satgnn_dpll_solve(
    f: *const SatgnnFormula,
    out_sat: *mut bool,
    out_values: *mut u8,
    len: usize,
) -> SatgnnStatus {
    guard(|| {
        let f = formula_arg(f)?;
        let sat = out_arg(out_sat, "out_sat")?;
        match logic::dpll_solve(f)? {
            SatResult::Sat(w) => {
                write_values(w.values(), out_values, len)?;
                *sat = true;
            }
            SatResult::Unsat => *sat = false,
        }
        Ok(())
    })
}

/// Minimum achievable gap and an assignment reaching it.
///
/// # Safety
/// `out_min_gap` must be writable; `out_values` null or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn satgnn_maxsat_optimum(
    f: *const SatgnnFormula,
    out_min_gap: *mut usize,
    out_values: *mut u8,
    len: usize,
) -> SatgnnStatus {
    guard(|| {
        let f = formula_arg(f)?;
        let gap = out_arg(out_min_gap, "out_min_gap")?;
        let sol = logic::maxsat_optimum(f)?;
        write_values(sol.witness.values(), out_values, len)?;
        *gap = sol.min_gap;
        Ok(())
    })
}

/// Load a model checkpoint written by the training pipeline.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn satgnn_model_load(path: *const c_char, out: *mut *mut SatgnnModel) -> SatgnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = train::load_model(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(SatgnnModel(m)));
        Ok(())
    })
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn satgnn_model_free(m: *mut SatgnnModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Message-passing search: best of `samples` attempts of up to `max_iters`
/// rounds each, stopping at the first satisfying decode. Writes the best
/// assignment, its gap and the round at which it appeared.
///
/// # Safety
/// Handles must be live; `out_values` null or `len` writable bytes; the
/// scalar outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn satgnn_model_solve(
    m: *const SatgnnModel,
    f: *const SatgnnFormula,
    max_iters: usize,
    samples: usize,
    seed: u64,
    out_values: *mut u8,
    len: usize,
    out_gap: *mut usize,
    out_iter: *mut usize,
) -> SatgnnStatus {
    guard(|| {
        let model = m
            .as_ref()
            .map(|h| &h.0)
            .ok_or_else(|| fail(SatgnnStatus::NullPointer, "model handle is null"))?;
        let f = formula_arg(f)?;
        let opts = SolveOptions {
            max_iters,
            early_stop: true,
        };
        let r = infer::resample_solve(model, f, opts, samples, seed)?;
        write_values(r.best.assignment.values(), out_values, len)?;
        if let Some(g) = out_gap.as_mut() {
            *g = r.best.best_gap;
        }
        if let Some(it) = out_iter.as_mut() {
            *it = r.best.best_iter;
        }
        Ok(())
    })
}
