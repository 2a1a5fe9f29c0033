//! C interface to `adaptive-mpc`.
//!
//! Every function returns an [`AmpcStatus`]; results are written through
//! out-pointers. On failure a description is available from
//! [`ampc_last_error`] on the same thread. Handles are opaque and must be
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use adaptive_mpc::adapt::{AdaptationConfig, ShorteningMode};
use adaptive_mpc::bench::{CraneModel, LqSystem};
use adaptive_mpc::closed_loop::{
    run_adaptive_from, run_fixed, ClosedLoopTrace, StepRecord, StopRule, Termination,
};
use adaptive_mpc::error::Error;
use adaptive_mpc::estimate::{self, EstimatorKind};
use adaptive_mpc::model::{Interval, SystemModel};
use adaptive_mpc::ocp::{self, OcpInstance, OcpSolver, SolverOptions};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    IntegrationFailure = 4,
    MaxIterations = 5,
    NonFiniteObjective = 6,
    EquilibriumReached = 7,
    HorizonCapReached = 8,
    EnumerationTooLarge = 9,
    SingularInnovation = 10,
    NoFeasibleGamma = 11,
    Panic = 99,
}

/// How a closed loop ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpcTermination {
    CostThreshold = 0,
    StepLimit = 1,
    Error = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpcEstimator {
    APosteriori = 0,
    APriori = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpcShortening {
    Certified = 0,
    HeuristicDecrement = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AmpcSolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub penalty_weight: f64,
    pub fd_step: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AmpcAdaptationConfig {
    pub alpha_bar: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub n0: usize,
    pub n_hat: usize,
    pub estimator: AmpcEstimator,
    pub shortening: AmpcShortening,
    pub equilibrium_threshold: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AmpcStopRule {
    pub cost_threshold: f64,
    pub max_steps: usize,
}

/// Opaque system model.
pub struct AmpcModel(SystemModel);

/// Opaque closed-loop trace.
pub struct AmpcTrace(ClosedLoopTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> AmpcStatus {
    match err.root() {
        Error::IntegrationFailure { .. } => AmpcStatus::IntegrationFailure,
        Error::MaxIterationsExceeded { .. } => AmpcStatus::MaxIterations,
        Error::NonFiniteObjective => AmpcStatus::NonFiniteObjective,
        Error::EquilibriumReached { .. } => AmpcStatus::EquilibriumReached,
        Error::HorizonCapReached { .. } => AmpcStatus::HorizonCapReached,
        Error::EnumerationTooLarge { .. } => AmpcStatus::EnumerationTooLarge,
        Error::SingularInnovation { .. } => AmpcStatus::SingularInnovation,
        Error::NoFeasibleGamma(_) => AmpcStatus::NoFeasibleGamma,
        _ => AmpcStatus::InvalidArgument,
    }
}

struct Fail(AmpcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AmpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AmpcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AmpcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AmpcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn model_ref<'a>(m: *const AmpcModel) -> Result<&'a SystemModel, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn trace_ref<'a>(t: *const AmpcTrace) -> Result<&'a ClosedLoopTrace, Fail> {
    t.as_ref().map(|t| &t.0).ok_or_else(|| null("trace"))
}

fn copy_into(src: &[f64], dst: *mut f64, capacity: usize) -> Result<(), Fail> {
    if capacity < src.len() {
        return Err(Fail(
            AmpcStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(null("output buffer"));
        }
        // SAFETY: the caller guarantees `capacity` writable values at `dst`.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    }
    Ok(())
}

fn solver_options(o: Option<&AmpcSolverOptions>) -> SolverOptions {
    let mut s = SolverOptions::default();
    if let Some(o) = o {
        s.tolerance = o.tolerance;
        s.max_iterations = o.max_iterations;
        s.penalty_weight = o.penalty_weight;
        s.fd_step = o.fd_step;
    }
    s
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ampc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ampc_solver_options_default() -> AmpcSolverOptions {
    let s = SolverOptions::default();
    AmpcSolverOptions {
        tolerance: s.tolerance,
        max_iterations: s.max_iterations,
        penalty_weight: s.penalty_weight,
        fd_step: s.fd_step,
    }
}

#[no_mangle]
pub extern "C" fn ampc_adaptation_config_default() -> AmpcAdaptationConfig {
    let c = AdaptationConfig::default();
    AmpcAdaptationConfig {
        alpha_bar: c.alpha_bar,
        n_min: c.n_min,
        n_max: c.n_max,
        n0: c.n0,
        n_hat: c.n_hat,
        estimator: match c.estimator {
            EstimatorKind::APosteriori => AmpcEstimator::APosteriori,
            EstimatorKind::APriori => AmpcEstimator::APriori,
        },
        shortening: match c.shortening {
            ShorteningMode::Certified => AmpcShortening::Certified,
            ShorteningMode::HeuristicDecrement => AmpcShortening::HeuristicDecrement,
        },
        equilibrium_threshold: c.equilibrium_threshold,
    }
}

#[no_mangle]
pub extern "C" fn ampc_stop_rule_default() -> AmpcStopRule {
    let s = StopRule::default();
    AmpcStopRule {
        cost_threshold: s.cost_threshold,
        max_steps: s.max_steps,
    }
}

/// The crane benchmark sampled with period `sampling_period` and
/// integrator tolerance `tolerance`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ampc_model_crane(
    sampling_period: f64,
    tolerance: f64,
    out: *mut *mut AmpcModel,
) -> AmpcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let model = CraneModel::default().system_model(sampling_period, tolerance)?;
        *out = Box::into_raw(Box::new(AmpcModel(model)));
        Ok(())
    })
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    let p = out(p, "out")?;
    *p = ptr::null_mut();
    Ok(p)
}

/// Linear system `x⁺ = Ax + Bu` with stage cost `x'Qx + u'Ru`. Matrices are
/// row-major. `u_lo` and `u_hi` may be null for unbounded controls.
///
/// # Safety
/// Non-null pointers must reference arrays of the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn ampc_model_lq(
    nx: usize,
    nu: usize,
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    u_lo: *const f64,
    u_hi: *const f64,
    out: *mut *mut AmpcModel,
) -> AmpcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        if nx == 0 || nu == 0 {
            return Err(Fail(
                AmpcStatus::InvalidArgument,
                "dimensions must be positive".into(),
            ));
        }
        let mat = |p, rows, cols, what| -> Result<DMatrix<f64>, Fail> {
            Ok(DMatrix::from_row_slice(
                rows,
                cols,
                slice(p, rows * cols, what)?,
            ))
        };
        let lq = LqSystem::new(
            mat(a, nx, nx, "A")?,
            mat(b, nx, nu, "B")?,
            mat(q, nx, nx, "Q")?,
            mat(r, nu, nu, "R")?,
        )?;
        let mut model = lq.model();
        if !u_lo.is_null() || !u_hi.is_null() {
            let lo = if u_lo.is_null() {
                vec![f64::NEG_INFINITY; nu]
            } else {
                slice(u_lo, nu, "u_lo")?.to_vec()
            };
            let hi = if u_hi.is_null() {
                vec![f64::INFINITY; nu]
            } else {
                slice(u_hi, nu, "u_hi")?.to_vec()
            };
            let bounds = lo
                .iter()
                .zip(&hi)
                .map(|(&l, &h)| Interval::new(l, h))
                .collect::<Result<Vec<_>, _>>()?;
            model = model.with_control_bounds(bounds)?;
        }
        *out = Box::into_raw(Box::new(AmpcModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from an `ampc_model_*` constructor and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ampc_model_free(model: *mut AmpcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ampc_model_dims(
    model: *const AmpcModel,
    state_dim: *mut usize,
    control_dim: *mut usize,
) -> AmpcStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out(state_dim, "state_dim")? = m.state_dim();
        *out(control_dim, "control_dim")? = m.control_dim();
        Ok(())
    })
}

/// Solves the `horizon`-stage problem at `x0` and writes `V_N(x0)` and the
/// `horizon · nu` optimal controls (stage-major). `options` may be null.
///
/// # Safety
/// `x0` must hold `nx` values and `controls` `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn ampc_solve(
    model: *const AmpcModel,
    x0: *const f64,
    nx: usize,
    horizon: usize,
    options: *const AmpcSolverOptions,
    value: *mut f64,
    controls: *mut f64,
    capacity: usize,
) -> AmpcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x0 = slice(x0, nx, "x0")?;
        let value = out(value, "value")?;
        let options = solver_options(options.as_ref());
        let solution = ocp::solve(&OcpInstance::new(m, x0, horizon), &options)?;
        let flat: Vec<f64> = solution.controls.concat();
        copy_into(&flat, controls, capacity)?;
        *value = solution.value;
        Ok(())
    })
}

/// A priori suboptimality `α(γ, N, N₀)`; `valid` is set to 1 when the
/// estimate certifies stability.
///
/// # Safety
/// Out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ampc_a_priori_alpha(
    gamma: f64,
    n: usize,
    n0: usize,
    alpha: *mut f64,
    valid: *mut i32,
) -> AmpcStatus {
    guard(|| {
        let alpha = out(alpha, "alpha")?;
        let valid = out(valid, "valid")?;
        let r = estimate::a_priori_alpha(gamma, n, n0)?;
        *alpha = r.alpha;
        *valid = r.valid as i32;
        Ok(())
    })
}

/// Largest `γ` with `α(γ, N, N₀) ≥ alpha_bar`.
///
/// # Safety
/// `gamma` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ampc_gamma_bar(
    alpha_bar: f64,
    n: usize,
    n0: usize,
    gamma: *mut f64,
) -> AmpcStatus {
    guard(|| {
        let gamma = out(gamma, "gamma")?;
        *gamma = estimate::gamma_bar(alpha_bar, n, n0)?;
        Ok(())
    })
}

/// Fixed-horizon closed loop. `options` and `stop` may be null for
/// defaults. A failure inside the loop still yields a trace whose
/// termination is `Error`.
///
/// # Safety
/// `x0` must hold `nx` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ampc_run_fixed(
    model: *const AmpcModel,
    x0: *const f64,
    nx: usize,
    horizon: usize,
    options: *const AmpcSolverOptions,
    stop: *const AmpcStopRule,
    out: *mut *mut AmpcTrace,
) -> AmpcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let m = model_ref(model)?;
        let x0 = slice(x0, nx, "x0")?;
        let solver = OcpSolver::new(m.clone(), solver_options(options.as_ref()));
        let trace = run_fixed(&solver, x0, horizon, stop_rule(stop.as_ref()));
        *out = Box::into_raw(Box::new(AmpcTrace(trace)));
        Ok(())
    })
}

fn stop_rule(s: Option<&AmpcStopRule>) -> StopRule {
    s.map_or_else(StopRule::default, |s| StopRule {
        cost_threshold: s.cost_threshold,
        max_steps: s.max_steps,
    })
}

/// Adaptive-horizon closed loop starting at `initial_horizon` (0 for the
/// smallest admissible horizon).
///
/// # Safety
/// `x0` must hold `nx` values; `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ampc_run_adaptive(
    model: *const AmpcModel,
    x0: *const f64,
    nx: usize,
    config: *const AmpcAdaptationConfig,
    initial_horizon: usize,
    options: *const AmpcSolverOptions,
    stop: *const AmpcStopRule,
    out: *mut *mut AmpcTrace,
) -> AmpcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let m = model_ref(model)?;
        let x0 = slice(x0, nx, "x0")?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let config = AdaptationConfig {
            alpha_bar: c.alpha_bar,
            n_min: c.n_min,
            n_max: c.n_max,
            n0: c.n0,
            n_hat: c.n_hat,
            estimator: match c.estimator {
                AmpcEstimator::APosteriori => EstimatorKind::APosteriori,
                AmpcEstimator::APriori => EstimatorKind::APriori,
            },
            shortening: match c.shortening {
                AmpcShortening::Certified => ShorteningMode::Certified,
                AmpcShortening::HeuristicDecrement => ShorteningMode::HeuristicDecrement,
            },
            equilibrium_threshold: c.equilibrium_threshold,
        };
        config.validate()?;
        let n = if initial_horizon == 0 {
            config.lowest_horizon()
        } else {
            initial_horizon
        };
        let solver = OcpSolver::new(m.clone(), solver_options(options.as_ref()));
        let trace = run_adaptive_from(&solver, x0, &config, n, stop_rule(stop.as_ref()));
        *out = Box::into_raw(Box::new(AmpcTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must come from `ampc_run_*` and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ampc_trace_free(trace: *mut AmpcTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of records, accumulated cost, largest horizon and termination.
/// When the loop ended in an error, `error` receives its status and
/// [`ampc_last_error`] its message; otherwise `error` is `Ok`.
///
/// # Safety
/// `trace` must be a live handle; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ampc_trace_summary(
    trace: *const AmpcTrace,
    len: *mut usize,
    accumulated_cost: *mut f64,
    n_star: *mut usize,
    termination: *mut AmpcTermination,
    error: *mut AmpcStatus,
) -> AmpcStatus {
    guard(|| {
        let t = trace_ref(trace)?;
        *out(len, "len")? = t.records.len();
        *out(accumulated_cost, "accumulated_cost")? = t.accumulated_cost;
        *out(n_star, "n_star")? = t.n_star;
        let (term, status) = match &t.terminated {
            Termination::CostThreshold => (AmpcTermination::CostThreshold, AmpcStatus::Ok),
            Termination::StepLimit => (AmpcTermination::StepLimit, AmpcStatus::Ok),
            Termination::Error(e) => {
                set_error(e.to_string());
                (AmpcTermination::Error, status_of(e))
            }
        };
        *out(termination, "termination")? = term;
        *out(error, "error")? = status;
        Ok(())
    })
}

/// Scalar data of record `index`. `alpha` is NaN where no estimate was
/// made; `reused` is 1 for steps that replayed stored controls.
///
/// # Safety
/// `trace` must be a live handle; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ampc_trace_step(
    trace: *const AmpcTrace,
    index: usize,
    horizon: *mut usize,
    stage_cost: *mut f64,
    value: *mut f64,
    alpha: *mut f64,
    reused: *mut i32,
) -> AmpcStatus {
    guard(|| {
        let r = record(trace, index)?;
        *out(horizon, "horizon")? = r.horizon;
        *out(stage_cost, "stage_cost")? = r.stage_cost;
        *out(value, "value")? = r.value;
        *out(alpha, "alpha")? = r.alpha.unwrap_or(f64::NAN);
        *out(reused, "reused")? = r.reused as i32;
        Ok(())
    })
}

unsafe fn record<'a>(trace: *const AmpcTrace, index: usize) -> Result<&'a StepRecord, Fail> {
    let t = trace_ref(trace)?;
    t.records.get(index).ok_or_else(|| {
        Fail(
            AmpcStatus::InvalidArgument,
            format!("record {index} out of range ({} records)", t.records.len()),
        )
    })
}

/// Copies the state of record `index` into `buf`.
///
/// # Safety
/// `buf` must hold `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn ampc_trace_state(
    trace: *const AmpcTrace,
    index: usize,
    buf: *mut f64,
    capacity: usize,
) -> AmpcStatus {
    guard(|| copy_into(&record(trace, index)?.state, buf, capacity))
}

/// Copies the applied control of record `index` into `buf`.
///
/// # Safety
/// `buf` must hold `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn ampc_trace_control(
    trace: *const AmpcTrace,
    index: usize,
    buf: *mut f64,
    capacity: usize,
) -> AmpcStatus {
    guard(|| copy_into(&record(trace, index)?.control, buf, capacity))
}
