//! C ABI over `gpopt`.
//!
//! Models are opaque heap handles created by `gpopt_model_*` constructors
//! and released with `gpopt_model_free`. Every fallible call returns a
//! `GpoptStatus`; on failure the message is kept per thread and can be
//! copied out with `gpopt_last_error`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;
use std::time::Duration;

use gpopt::bnb::{solve, Settings, Status};
use gpopt::envelopes::acquisition::AcquisitionSpec;
use gpopt::envelopes::KernelKind;
use gpopt::error::Error;
use gpopt::gp::GpModel;
use gpopt::interval::Interval;
use gpopt::problem::{build_acquisition, build_chance_constrained, build_fs_mean, build_rs_mean, Problem, Sense};
use gpopt::train::{map_train, PriorSpec, TrainingData};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Schema = 4,
    NotPositiveDefinite = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Termination reason of a branch-and-bound run.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpoptSolveStatus {
    Optimal = 0,
    TimeLimit = 1,
    IterLimit = 2,
    Infeasible = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpoptKernel {
    Matern12 = 0,
    Matern32 = 1,
    Matern52 = 2,
    SquaredExponential = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpoptFormulation {
    Reduced = 0,
    Full = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpoptAcquisition {
    /// Expected improvement over `param` (the incumbent value).
    Ei = 0,
    /// Probability of improvement over `param`.
    Pi = 1,
    /// Lower confidence bound with weight `param`.
    Lcb = 2,
}

/// Solver settings; obtain defaults from `gpopt_settings_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpoptSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub feas_tol: f64,
    pub max_time_s: f64,
    pub max_iter: u64,
    pub multistart_count: u64,
    pub use_envelopes: bool,
    pub seed: u64,
}

/// Summary of a solve. Objective values are in minimization form.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpoptResult {
    pub status: GpoptSolveStatus,
    pub ub: f64,
    pub lb: f64,
    pub iterations: u64,
    pub wall_time_s: f64,
    /// Whether an incumbent was found and written to the caller's buffer.
    pub has_incumbent: bool,
}

/// Opaque trained model.
pub struct GpoptModel {
    inner: Arc<GpModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn code_of(e: &Error) -> GpoptStatus {
    match e {
        Error::Io(_) => GpoptStatus::Io,
        Error::Schema { .. } | Error::Csv { .. } => GpoptStatus::Schema,
        Error::NotPositiveDefinite => GpoptStatus::NotPositiveDefinite,
        Error::RootFind { .. } | Error::LpBreakdown { .. } | Error::IntervalDivisionByZero => GpoptStatus::Numerical,
        _ => GpoptStatus::InvalidInput,
    }
}

struct Failure(GpoptStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(code_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(GpoptStatus::NullPointer, format!("`{name}` is null"))
}

/// Runs `f`, recording failures and converting panics.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GpoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GpoptStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GpoptStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(GpoptStatus::InvalidInput, format!("`{name}` is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_arg<'a>(p: *const GpoptModel, name: &str) -> Result<&'a GpoptModel, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn emit_model(out: *mut *mut GpoptModel, model: GpModel) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(GpoptModel { inner: Arc::new(model) }));
    Ok(())
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `len` bytes) and returns its full length in bytes
/// excluding the terminator. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gpopt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

#[no_mangle]
pub extern "C" fn gpopt_settings_default() -> GpoptSettings {
    let s = Settings::default();
    GpoptSettings {
        abs_tol: s.abs_tol,
        rel_tol: s.rel_tol,
        feas_tol: s.feas_tol,
        max_time_s: s.max_time.as_secs_f64(),
        max_iter: s.max_iter as u64,
        multistart_count: s.multistart_count as u64,
        use_envelopes: s.use_envelopes,
        seed: s.seed,
    }
}

/// The peaks test function.
#[no_mangle]
pub extern "C" fn gpopt_peaks(x1: f64, x2: f64) -> f64 {
    gpopt::cli::peaks(x1, x2)
}

/// Loads a model document from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gpopt_model_load(path: *const c_char, out: *mut *mut GpoptModel) -> GpoptStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        emit_model(out, GpModel::load(Path::new(path))?)
    })
}

/// Parses a model document from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gpopt_model_from_json(json: *const c_char, out: *mut *mut GpoptModel) -> GpoptStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        emit_model(out, GpModel::from_json(json)?)
    })
}

/// Writes the model document to a file.
///
/// # Safety
/// `model` must come from a constructor of this library; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gpopt_model_save(model: *const GpoptModel, path: *const c_char) -> GpoptStatus {
    guard(|| {
        let m = model_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        m.inner.save(Path::new(path))?;
        Ok(())
    })
}

/// MAP training on `n` row-major samples of dimension `dim`, with input
/// bounds `lo[i] <= x_i <= hi[i]`.
///
/// # Safety
/// `x` must hold `n * dim` values, `y` `n` values, `lo` and `hi` `dim`
/// values each; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gpopt_model_train(
    x: *const f64,
    y: *const f64,
    n: usize,
    dim: usize,
    lo: *const f64,
    hi: *const f64,
    kernel: GpoptKernel,
    restarts: usize,
    seed: u64,
    out: *mut *mut GpoptModel,
) -> GpoptStatus {
    guard(|| {
        let total = n.checked_mul(dim).ok_or_else(|| Failure(GpoptStatus::InvalidInput, "size overflow".into()))?;
        let x = slice_arg(x, total, "x")?;
        let y = slice_arg(y, n, "y")?;
        let (lo, hi) = (slice_arg(lo, dim, "lo")?, slice_arg(hi, dim, "hi")?);
        let bounds = lo.iter().zip(hi).map(|(&a, &b)| Interval::new(a, b)).collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<Vec<f64>> = if dim == 0 { vec![Vec::new(); n] } else { x.chunks(dim).map(<[f64]>::to_vec).collect() };
        let data = TrainingData::new(rows, y.to_vec(), bounds)?;
        let kind = match kernel {
            GpoptKernel::Matern12 => KernelKind::Matern12,
            GpoptKernel::Matern32 => KernelKind::Matern32,
            GpoptKernel::Matern52 => KernelKind::Matern52,
            GpoptKernel::SquaredExponential => KernelKind::SquaredExponential,
        };
        let trained = map_train(&data, kind, &PriorSpec::default_for(dim), restarts, seed)?;
        emit_model(out, trained.model)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from a constructor of this library and not
/// have been freed.
#[no_mangle]
pub unsafe extern "C" fn gpopt_model_free(model: *mut GpoptModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpopt_model_dim(model: *const GpoptModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim)
}

/// Posterior mean and variance at `x` (raw units, `dim` values).
///
/// # Safety
/// `model` must be a live handle, `x` must hold `dim` values, and `mean`,
/// `variance` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gpopt_model_predict(
    model: *const GpoptModel,
    x: *const f64,
    mean: *mut f64,
    variance: *mut f64,
) -> GpoptStatus {
    guard(|| {
        let m = model_arg(model, "model")?;
        let x = slice_arg(x, m.inner.dim, "x")?;
        if mean.is_null() || variance.is_null() {
            return Err(null("mean/variance"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Failure(GpoptStatus::InvalidInput, "non-finite input".into()));
        }
        *mean = m.inner.predict_mean(x);
        *variance = m.inner.predict_variance(x);
        Ok(())
    })
}

fn settings_from(s: &GpoptSettings) -> Result<Settings, Failure> {
    if !(s.max_time_s.is_finite() && s.max_time_s >= 0.0) {
        return Err(Failure(GpoptStatus::InvalidInput, "max_time_s must be finite and non-negative".into()));
    }
    Ok(Settings {
        abs_tol: s.abs_tol,
        rel_tol: s.rel_tol,
        feas_tol: s.feas_tol,
        max_time: Duration::from_secs_f64(s.max_time_s),
        max_iter: usize::try_from(s.max_iter).unwrap_or(usize::MAX),
        multistart_count: usize::try_from(s.multistart_count).unwrap_or(usize::MAX),
        use_envelopes: s.use_envelopes,
        seed: s.seed,
        ..Settings::default()
    })
}

unsafe fn run(
    build: impl FnOnce() -> Result<Problem, Failure>,
    settings: *const GpoptSettings,
    result: *mut GpoptResult,
    x_out: *mut f64,
    x_len: usize,
) -> Result<(), Failure> {
    let settings = settings_from(settings.as_ref().ok_or_else(|| null("settings"))?)?;
    if result.is_null() {
        return Err(null("result"));
    }
    let p = build()?;
    if x_len < p.n_dof {
        return Err(Failure(GpoptStatus::BufferTooSmall, format!("incumbent needs {} values, buffer has {x_len}", p.n_dof)));
    }
    if x_out.is_null() && p.n_dof > 0 {
        return Err(null("x_out"));
    }
    let r = solve(&p, &settings)?;
    if let Some(x) = &r.incumbent {
        ptr::copy_nonoverlapping(x.as_ptr(), x_out, p.n_dof);
    }
    *result = GpoptResult {
        status: match r.status {
            Status::Optimal => GpoptSolveStatus::Optimal,
            Status::TimeLimit => GpoptSolveStatus::TimeLimit,
            Status::IterLimit => GpoptSolveStatus::IterLimit,
            Status::Infeasible => GpoptSolveStatus::Infeasible,
        },
        ub: r.ub,
        lb: r.lb,
        iterations: r.iterations as u64,
        wall_time_s: r.wall_time,
        has_incumbent: r.incumbent.is_some(),
    };
    Ok(())
}

/// Minimizes (or, with `maximize`, maximizes) the posterior mean over the
/// model's input box. The incumbent's inputs are written to `x_out`.
///
/// # Safety
/// Handles and pointers must be valid; `x_out` must hold `x_len` values.
#[no_mangle]
pub unsafe extern "C" fn gpopt_solve_mean(
    model: *const GpoptModel,
    formulation: GpoptFormulation,
    maximize: bool,
    settings: *const GpoptSettings,
    result: *mut GpoptResult,
    x_out: *mut f64,
    x_len: usize,
) -> GpoptStatus {
    guard(|| {
        let m = model_arg(model, "model")?.inner.clone();
        let sense = if maximize { Sense::Max } else { Sense::Min };
        let build = || -> Result<Problem, Failure> {
            Ok(match formulation {
                GpoptFormulation::Reduced => build_rs_mean(m, sense)?,
                GpoptFormulation::Full => build_fs_mean(m, sense)?,
            })
        };
        run(build, settings, result, x_out, x_len)
    })
}

/// Optimizes an acquisition function: maximizes EI or PI over the incumbent
/// value `param`, or minimizes LCB with weight `param`.
///
/// # Safety
/// Handles and pointers must be valid; `x_out` must hold `x_len` values.
#[no_mangle]
pub unsafe extern "C" fn gpopt_solve_acquisition(
    model: *const GpoptModel,
    kind: GpoptAcquisition,
    param: f64,
    settings: *const GpoptSettings,
    result: *mut GpoptResult,
    x_out: *mut f64,
    x_len: usize,
) -> GpoptStatus {
    guard(|| {
        let m = model_arg(model, "model")?.inner.clone();
        let build = || -> Result<Problem, Failure> {
            let spec = match kind {
                GpoptAcquisition::Ei => AcquisitionSpec::ei(param)?,
                GpoptAcquisition::Pi => AcquisitionSpec::pi(param)?,
                GpoptAcquisition::Lcb => AcquisitionSpec::lcb(param)?,
            };
            Ok(build_acquisition(m, &spec)?)
        };
        run(build, settings, result, x_out, x_len)
    })
}

/// Maximizes the mean of `objective` subject to
/// `mean_c + z * sqrt(var_c) <= c` for the model `constraint`.
///
/// # Safety
/// Handles and pointers must be valid; `x_out` must hold `x_len` values.
#[no_mangle]
pub unsafe extern "C" fn gpopt_solve_chance(
    objective: *const GpoptModel,
    constraint: *const GpoptModel,
    c: f64,
    z: f64,
    settings: *const GpoptSettings,
    result: *mut GpoptResult,
    x_out: *mut f64,
    x_len: usize,
) -> GpoptStatus {
    guard(|| {
        let o = model_arg(objective, "objective")?.inner.clone();
        let k = model_arg(constraint, "constraint")?.inner.clone();
        run(|| Ok(build_chance_constrained(o, k, c, z)?), settings, result, x_out, x_len)
    })
}
