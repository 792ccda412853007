//! C ABI over `resilient-gd`.
//!
//! Every fallible entry point returns an [`RgdStatus`] and writes results
//! through out-pointers. On failure a human-readable message is stored per
//! thread and can be fetched with [`rgd_last_error_message`]. Problems and
//! trajectories are opaque heap handles released with their `_free`
//! function. Panics are caught at the boundary and reported as
//! `RGD_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::{DMatrix, DVector};
use resilient_gd::aggregation::cge_filter;
use resilient_gd::bounds::{bound_tabulated, convexity_gamma, lipschitz_mu};
use resilient_gd::config::{load_fixture, ConfigFile};
use resilient_gd::engine::{run, Trajectory};
use resilient_gd::redundancy::compute_epsilon;
use resilient_gd::{Error, RegressionProblem};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    DimensionMismatch = 4,
    RankDeficient = 5,
    BudgetInvalid = 6,
    NonPositiveMargin = 7,
    StepTooLarge = 8,
    InsufficientReports = 9,
    EnumerationTooLarge = 10,
    InvalidProblem = 11,
    InvalidConfig = 12,
    Io = 13,
    Parse = 14,
    Internal = 15,
}

impl From<&Error> for RgdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::RankDeficient { .. } => RgdStatus::RankDeficient,
            Error::BudgetInvalid(_) => RgdStatus::BudgetInvalid,
            Error::NonPositiveMargin { .. } => RgdStatus::NonPositiveMargin,
            Error::StepTooLarge { .. } => RgdStatus::StepTooLarge,
            Error::DimensionMismatch { .. } | Error::WrongCount { .. } => RgdStatus::DimensionMismatch,
            Error::EmptySubset | Error::AgentOutOfRange { .. } | Error::InvalidArgument(_) => {
                RgdStatus::InvalidArgument
            }
            Error::InsufficientReports { .. } => RgdStatus::InsufficientReports,
            Error::EnumerationTooLarge { .. } => RgdStatus::EnumerationTooLarge,
            Error::InvalidProblem(_) => RgdStatus::InvalidProblem,
            Error::InvalidConfig(_) => RgdStatus::InvalidConfig,
            Error::Io { .. } => RgdStatus::Io,
            Error::Parse { .. } => RgdStatus::Parse,
        }
    }
}

/// Opaque handle to a regression problem.
pub struct RgdProblem(RegressionProblem);

/// Opaque handle to a finished run.
pub struct RgdTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

struct Failure(RgdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(RgdStatus::from(&e), e.to_string())
    }
}

fn fail<T>(status: RgdStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `body`, translating errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RgdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            RgdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            RgdStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    match p.as_ref() {
        Some(v) => Ok(v),
        None => fail(RgdStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(RgdStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(RgdStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(RgdStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn write_scalar(out: *mut f64, value: f64) -> Result<(), Failure> {
    if out.is_null() {
        return fail(RgdStatus::NullPointer, "output pointer is null");
    }
    *out = value;
    Ok(())
}

unsafe fn write_vector(out: *mut f64, out_len: usize, v: &DVector<f64>) -> Result<(), Failure> {
    if out.is_null() {
        return fail(RgdStatus::NullPointer, "output buffer is null");
    }
    if out_len < v.len() {
        return fail(
            RgdStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, need {}", v.len()),
        );
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(RgdStatus::NullPointer, "output handle pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null after a
/// success. The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rgd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a bundled dataset by name (e.g. `"paper-regression"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_problem_from_fixture(name: *const c_char, out: *mut *mut RgdProblem) -> RgdStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        store(out, RgdProblem(load_fixture(name)?))
    })
}

/// Loads a problem from a CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_problem_from_csv(path: *const c_char, out: *mut *mut RgdProblem) -> RgdStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        store(out, RgdProblem(RegressionProblem::from_csv_path(path)?))
    })
}

/// Builds a problem from `n` agents. Agent `i` owns the next
/// `rows_per_agent[i]` rows of the row-major `total × d` matrix `rows` and
/// the matching entries of `responses`, where `total` is the sum of
/// `rows_per_agent`.
///
/// # Safety
/// `rows_per_agent` must hold `n` values, `rows` `total · d` values and
/// `responses` `total` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_problem_from_arrays(
    n: usize,
    d: usize,
    rows_per_agent: *const usize,
    rows: *const f64,
    responses: *const f64,
    out: *mut *mut RgdProblem,
) -> RgdStatus {
    guard(|| {
        let counts = slice(rows_per_agent, n, "rows_per_agent")?;
        let total = counts
            .iter()
            .try_fold(0usize, |acc, &k| acc.checked_add(k))
            .and_then(|t| t.checked_mul(d.max(1)).map(|_| t));
        let Some(total) = total else {
            return fail(RgdStatus::InvalidArgument, "row counts overflow");
        };
        let a = slice(rows, total * d, "rows")?;
        let b = slice(responses, total, "responses")?;
        let mut agents = Vec::with_capacity(n);
        let mut start = 0;
        for &k in counts {
            agents.push((
                DMatrix::from_row_slice(k, d, &a[start * d..(start + k) * d]),
                DVector::from_column_slice(&b[start..start + k]),
            ));
            start += k;
        }
        store(out, RgdProblem(RegressionProblem::new(agents)?))
    })
}

/// Releases a problem. Null is ignored.
///
/// # Safety
/// `problem` must come from an `rgd_problem_from_*` call and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn rgd_problem_free(problem: *mut RgdProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of agents, or 0 for null.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgd_problem_n(problem: *const RgdProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.n())
}

/// Parameter dimension, or 0 for null.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgd_problem_dim(problem: *const RgdProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.dim())
}

/// Minimizer of the summed cost of the agents in `subset` (0-based).
///
/// # Safety
/// `subset` must hold `subset_len` values and `out_x` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn rgd_least_squares_min(
    problem: *const RgdProblem,
    subset: *const usize,
    subset_len: usize,
    out_x: *mut f64,
    out_len: usize,
) -> RgdStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        let s = slice(subset, subset_len, "subset")?;
        write_vector(out_x, out_len, &p.0.least_squares_min(s)?)
    })
}

/// Smallest `ε` for which the problem is `(f, r; ε)`-redundant.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_compute_epsilon(
    problem: *const RgdProblem,
    f: usize,
    r: usize,
    out: *mut f64,
) -> RgdStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        write_scalar(out, compute_epsilon(&p.0, f, r)?.epsilon)
    })
}

/// Lipschitz constant `μ` of the agents' gradients.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_mu(problem: *const RgdProblem, out: *mut f64) -> RgdStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        write_scalar(out, lipschitz_mu(&p.0)?)
    })
}

/// Strong convexity constant `γ` for `f` faulty agents.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_gamma(problem: *const RgdProblem, f: usize, out: *mut f64) -> RgdStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        write_scalar(out, convexity_gamma(&p.0, f)?)
    })
}

/// Tabulated convergence radius `D*` for `(f, r)`.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_dstar(problem: *const RgdProblem, f: usize, r: usize, out: *mut f64) -> RgdStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.0;
        let eps = compute_epsilon(p, f, r)?.epsilon;
        let bound = bound_tabulated(p.n(), f, r, lipschitz_mu(p)?, convexity_gamma(p, f)?, eps)?;
        write_scalar(out, bound.radius)
    })
}

/// Comparative gradient elimination over `m` gradients of length `d`
/// stored row-major in `gradients`: drops the `f` largest norms and sums
/// the rest into `out` (length `d`).
///
/// # Safety
/// `gradients` must hold `m · d` values and `out` `d` values.
#[no_mangle]
pub unsafe extern "C" fn rgd_cge_filter(
    gradients: *const f64,
    m: usize,
    d: usize,
    f: usize,
    out: *mut f64,
) -> RgdStatus {
    guard(|| {
        let Some(len) = m.checked_mul(d) else {
            return fail(RgdStatus::InvalidArgument, "m * d overflows");
        };
        let flat = slice(gradients, len, "gradients")?;
        let grads: Vec<DVector<f64>> = (0..m)
            .map(|i| DVector::from_column_slice(&flat[i * d..(i + 1) * d]))
            .collect();
        write_vector(out, d, &cge_filter(&grads, f)?)
    })
}

/// Runs a simulation described by a JSON config (the CLI's `run` format).
/// Relative dataset paths resolve against `base_dir`, or the working
/// directory when `base_dir` is null.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `base_dir` null or
/// NUL-terminated, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_run_json(
    config_json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut RgdTrajectory,
) -> RgdStatus {
    guard(|| {
        let text = c_str(config_json, "config_json")?;
        let base = if base_dir.is_null() {
            "."
        } else {
            c_str(base_dir, "base_dir")?
        };
        let cfg = ConfigFile::parse(text, "<config>")?.resolve(Path::new(base))?;
        store(out, RgdTrajectory(run(&cfg)?))
    })
}

/// Releases a trajectory. Null is ignored.
///
/// # Safety
/// `traj` must come from [`rgd_run_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rgd_trajectory_free(traj: *mut RgdTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded iterates (`T + 1`), or 0 for null.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgd_trajectory_len(traj: *const RgdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.rows.len())
}

/// Parameter dimension, or 0 for null.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgd_trajectory_dim(traj: *const RgdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.x_h.len())
}

/// Copies iterate `x^t` into `out_x`.
///
/// # Safety
/// `traj` must be a live handle and `out_x` hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn rgd_trajectory_point(
    traj: *const RgdTrajectory,
    t: usize,
    out_x: *mut f64,
    out_len: usize,
) -> RgdStatus {
    guard(|| {
        let tr = &deref(traj, "trajectory")?.0;
        match tr.rows.get(t) {
            Some(row) => write_vector(out_x, out_len, &DVector::from_column_slice(&row.x)),
            None => fail(
                RgdStatus::InvalidArgument,
                format!("iteration {t} out of range for {} rows", tr.rows.len()),
            ),
        }
    })
}

/// Distance from `x^t` to the honest minimizer.
///
/// # Safety
/// `traj` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgd_trajectory_dist(traj: *const RgdTrajectory, t: usize, out: *mut f64) -> RgdStatus {
    guard(|| {
        let tr = &deref(traj, "trajectory")?.0;
        match tr.rows.get(t) {
            Some(row) => write_scalar(out, row.dist),
            None => fail(
                RgdStatus::InvalidArgument,
                format!("iteration {t} out of range for {} rows", tr.rows.len()),
            ),
        }
    })
}

/// Copies the honest minimizer `x_H` into `out_x`.
///
/// # Safety
/// `traj` must be a live handle and `out_x` hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn rgd_trajectory_honest_minimizer(
    traj: *const RgdTrajectory,
    out_x: *mut f64,
    out_len: usize,
) -> RgdStatus {
    guard(|| {
        let tr = &deref(traj, "trajectory")?.0;
        write_vector(out_x, out_len, &tr.x_h)
    })
}

/// Writes the trajectory CSV (same format as the CLI) to `path`.
///
/// # Safety
/// `traj` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rgd_trajectory_write_csv(traj: *const RgdTrajectory, path: *const c_char) -> RgdStatus {
    guard(|| {
        let tr = &deref(traj, "trajectory")?.0;
        let path = c_str(path, "path")?;
        let file = std::fs::File::create(path).or_else(|e| fail(RgdStatus::Io, format!("{path}: {e}")))?;
        tr.write_csv(std::io::BufWriter::new(file))?;
        Ok(())
    })
}
