//! Finite-horizon optimal control by direct single shooting.
//!
//! The decision vector is the stacked control sequence `u(0), …, u(N−1)`;
//! states are eliminated by simulation. Control boxes are handled exactly by
//! projection and state boxes by a quadratic exterior penalty `ρ·dist²`
//! evaluated at the predicted states `x(1), …, x(N)`. The reported value
//! `V_N` is the plain sum of stage costs, without the penalty.

mod pqn;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::model::SystemModel;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stationarity tolerance on the scaled projected gradient.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// State-constraint penalty weight `ρ`.
    pub penalty_weight: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Turn a hit iteration limit into [`Error::MaxIterationsExceeded`].
    pub require_convergence: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: 300,
            penalty_weight: DEFAULT_PENALTY,
            fd_step: 1e-6,
            require_convergence: false,
        }
    }
}

/// One finite-horizon problem `min_u J_N(x0, u)`.
#[derive(Debug, Clone)]
pub struct OcpInstance<'a> {
    pub model: &'a SystemModel,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub warm_start: Option<Vec<Vec<f64>>>,
    pub state_penalty_weight: f64,
}

impl<'a> OcpInstance<'a> {
    pub fn new(model: &'a SystemModel, x0: &[f64], horizon: usize) -> Self {
        OcpInstance {
            model,
            x0: x0.to_vec(),
            horizon,
            warm_start: None,
            state_penalty_weight: DEFAULT_PENALTY,
        }
    }

    pub fn with_warm_start(mut self, controls: Vec<Vec<f64>>) -> Self {
        self.warm_start = Some(controls);
        self
    }

    pub fn with_penalty(mut self, rho: f64) -> Self {
        self.state_penalty_weight = rho;
        self
    }

    fn validate(&self) -> Result<()> {
        let m = self.model;
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.x0.len() != m.state_dim() || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "initial state has wrong dimension or is not finite",
            ));
        }
        if !(self.state_penalty_weight >= 0.0) {
            return Err(Error::invalid("penalty weight must be nonnegative"));
        }
        if let Some(ws) = &self.warm_start {
            if ws.len() != self.horizon {
                return Err(Error::invalid(format!(
                    "warm start has length {}, horizon is {}",
                    ws.len(),
                    self.horizon
                )));
            }
            if !ws.iter().all(|u| m.control_feasible(u)) {
                return Err(Error::invalid("warm start violates the control bounds"));
            }
        }
        Ok(())
    }
}

/// Open-loop minimizer `u_N(·, x0)` with its trajectory and value.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub controls: Vec<Vec<f64>>,
    pub trajectory: Vec<Vec<f64>>,
    /// `V_N(x0)`, the sum of `stage_costs`.
    pub value: f64,
    pub stage_costs: Vec<f64>,
    /// Objective including the state penalty.
    pub penalized_objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub first_order_residual: f64,
}

impl OcpSolution {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn first_control(&self) -> &[f64] {
        &self.controls[0]
    }

    /// Sum of stage costs from stage `k` on.
    pub fn tail_value(&self, k: usize) -> f64 {
        self.stage_costs[k..].iter().sum()
    }
}

/// Receding-horizon shift: drop the first control and repeat the last.
pub fn shift_controls(controls: &[Vec<f64>], len: usize) -> Vec<Vec<f64>> {
    let tail = if controls.len() > 1 {
        &controls[1..]
    } else {
        controls
    };
    resize_controls(tail, len)
}

/// Truncates, or pads by repeating the last control.
pub fn resize_controls(controls: &[Vec<f64>], len: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = controls.iter().take(len).cloned().collect();
    if let Some(last) = controls.last() {
        while out.len() < len {
            out.push(last.clone());
        }
    }
    out
}

struct Shooting<'a> {
    model: &'a SystemModel,
    x0: &'a [f64],
    horizon: usize,
    rho: f64,
    fd_step: f64,
}

struct Trajectory {
    states: Vec<Vec<f64>>,
    stage_costs: Vec<f64>,
    // penalized cost of stage k (stage cost + penalty at x(k+1))
    stage_terms: Vec<f64>,
}

impl Shooting<'_> {
    fn m(&self) -> usize {
        self.model.control_dim()
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        if self.rho == 0.0 {
            0.0
        } else {
            self.rho * self.model.state_violation_sq(x)
        }
    }

    fn simulate(&self, u: &[f64]) -> Option<Trajectory> {
        let m = self.m();
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut stage_costs = Vec::with_capacity(self.horizon);
        let mut stage_terms = Vec::with_capacity(self.horizon);
        states.push(self.x0.to_vec());
        for k in 0..self.horizon {
            let (next, cost) = self
                .model
                .transition(&states[k], &u[k * m..(k + 1) * m])
                .ok()?;
            stage_terms.push(cost + self.penalty(&next));
            stage_costs.push(cost);
            states.push(next);
        }
        Some(Trajectory {
            states,
            stage_costs,
            stage_terms,
        })
    }

    /// Penalized cost of stages `k..N` starting from `x_k`.
    fn suffix(&self, x_k: &[f64], u: &[f64], k: usize) -> Option<f64> {
        let m = self.m();
        let mut x = x_k.to_vec();
        let mut total = 0.0;
        for s in k..self.horizon {
            let (next, cost) = self.model.transition(&x, &u[s * m..(s + 1) * m]).ok()?;
            total += cost + self.penalty(&next);
            x = next;
        }
        total.is_finite().then_some(total)
    }
}

impl pqn::Objective for Shooting<'_> {
    type Cache = Trajectory;

    fn eval(&self, u: &[f64]) -> Option<(f64, Trajectory)> {
        let traj = self.simulate(u)?;
        let f: f64 = traj.stage_terms.iter().sum();
        f.is_finite().then_some((f, traj))
    }

    // Central differences; a perturbation of stage k only re-simulates
    // stages k..N from the cached state x(k).
    fn gradient(&self, u: &[f64], _f: f64, traj: &Trajectory, g: &mut [f64]) {
        let m = self.m();
        let mut work = u.to_vec();
        for k in 0..self.horizon {
            let base: f64 = traj.stage_terms[k..].iter().sum();
            for j in 0..m {
                let idx = k * m + j;
                let h = self.fd_step * u[idx].abs().max(1.0);
                work[idx] = u[idx] + h;
                let plus = self.suffix(&traj.states[k], &work, k);
                work[idx] = u[idx] - h;
                let minus = self.suffix(&traj.states[k], &work, k);
                work[idx] = u[idx];
                g[idx] = match (plus, minus) {
                    (Some(p), Some(q)) => (p - q) / (2.0 * h),
                    (Some(p), None) => (p - base) / h,
                    (None, Some(q)) => (base - q) / h,
                    (None, None) => 0.0,
                };
            }
        }
    }
}

/// Gradient of the penalized shooting objective as used by the solver.
pub fn shooting_gradient(
    instance: &OcpInstance<'_>,
    controls: &[Vec<f64>],
    fd_step: f64,
) -> Result<Vec<f64>> {
    use pqn::Objective;
    let obj = Shooting {
        model: instance.model,
        x0: &instance.x0,
        horizon: instance.horizon,
        rho: instance.state_penalty_weight,
        fd_step,
    };
    let u: Vec<f64> = controls.iter().flatten().copied().collect();
    if u.len() != instance.horizon * instance.model.control_dim() {
        return Err(Error::invalid(
            "control sequence does not match the horizon",
        ));
    }
    let (f, traj) = obj.eval(&u).ok_or(Error::NonFiniteObjective)?;
    let mut g = vec![0.0; u.len()];
    obj.gradient(&u, f, &traj, &mut g);
    Ok(g)
}

/// Solves the instance. A run that stops at the iteration limit still
/// returns its best iterate with `converged = false`, unless
/// `options.require_convergence` is set.
pub fn solve(instance: &OcpInstance<'_>, options: &SolverOptions) -> Result<OcpSolution> {
    instance.validate()?;
    let model = instance.model;
    let m = model.control_dim();
    let n = instance.horizon;

    let lo: Vec<f64> = (0..n)
        .flat_map(|_| model.control_bounds().iter().map(|b| b.lo))
        .collect();
    let hi: Vec<f64> = (0..n)
        .flat_map(|_| model.control_bounds().iter().map(|b| b.hi))
        .collect();
    let u0: Vec<f64> = match &instance.warm_start {
        Some(ws) => ws.iter().flatten().copied().collect(),
        None => vec![0.0; n * m],
    };

    let obj = Shooting {
        model,
        x0: &instance.x0,
        horizon: n,
        rho: instance.state_penalty_weight,
        fd_step: options.fd_step,
    };
    let out = pqn::minimize(
        &obj,
        u0,
        &lo,
        &hi,
        pqn::Settings {
            tolerance: options.tolerance,
            max_iterations: options.max_iterations,
        },
    )
    .ok_or(Error::NonFiniteObjective)?;

    let controls: Vec<Vec<f64>> = out.x.chunks(m).map(|c| c.to_vec()).collect();
    let value = out.cache.stage_costs.iter().sum();
    let solution = OcpSolution {
        controls,
        trajectory: out.cache.states,
        value,
        stage_costs: out.cache.stage_costs,
        penalized_objective: out.f,
        converged: out.converged,
        iterations: out.iterations,
        first_order_residual: out.residual,
    };
    if options.require_convergence && !solution.converged {
        return Err(Error::MaxIterationsExceeded {
            iterations: solution.iterations,
            residual: solution.first_order_residual,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

/// `V_N(x0)`.
pub fn value(instance: &OcpInstance<'_>, options: &SolverOptions) -> Result<f64> {
    solve(instance, options).map(|s| s.value)
}

/// MPC feedback `μ_N(x0) = u_N(0, x0)`.
pub fn feedback(instance: &OcpInstance<'_>, options: &SolverOptions) -> Result<Vec<f64>> {
    solve(instance, options).map(|mut s| s.controls.swap_remove(0))
}

type CacheKey = (Vec<u64>, usize);

const CACHE_LIMIT: usize = 4096;

/// Shared solver handle for one model: memoizes solutions by
/// `(state bit pattern, horizon)` and counts actual solver invocations.
///
/// Concurrent callers may duplicate work on a cache miss but never observe
/// a partially written entry.
pub struct OcpSolver {
    model: SystemModel,
    options: SolverOptions,
    cache: Mutex<HashMap<CacheKey, Arc<OcpSolution>>>,
    solves: AtomicUsize,
    memoize: bool,
}

impl OcpSolver {
    pub fn new(model: SystemModel, options: SolverOptions) -> Self {
        OcpSolver {
            model,
            options,
            cache: Mutex::new(HashMap::new()),
            solves: AtomicUsize::new(0),
            memoize: true,
        }
    }

    /// A handle that always re-solves.
    pub fn without_cache(model: SystemModel, options: SolverOptions) -> Self {
        OcpSolver {
            memoize: false,
            ..Self::new(model, options)
        }
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Number of solver invocations so far (cache hits excluded).
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn clear_cache(&self) {
        self.cache.lock().expect("solver cache poisoned").clear();
    }

    pub fn instance(
        &self,
        x0: &[f64],
        horizon: usize,
        warm: Option<Vec<Vec<f64>>>,
    ) -> OcpInstance<'_> {
        OcpInstance {
            model: &self.model,
            x0: x0.to_vec(),
            horizon,
            warm_start: warm,
            state_penalty_weight: self.options.penalty_weight,
        }
    }

    /// Solves at `x0` with the given horizon. A warm start of the wrong
    /// length is resized by truncation or repetition of its last control.
    pub fn solve(
        &self,
        x0: &[f64],
        horizon: usize,
        warm: Option<&[Vec<f64>]>,
    ) -> Result<Arc<OcpSolution>> {
        let key = (x0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), horizon);
        if self.memoize {
            if let Some(hit) = self.cache.lock().expect("solver cache poisoned").get(&key) {
                return Ok(Arc::clone(hit));
            }
        }
        let warm = warm.filter(|w| !w.is_empty()).map(|w| {
            let mut w = resize_controls(w, horizon);
            w.iter_mut().for_each(|u| self.model.project_control(u));
            w
        });
        self.solves.fetch_add(1, Ordering::Relaxed);
        let solution = Arc::new(solve(&self.instance(x0, horizon, warm), &self.options)?);
        if self.memoize {
            let mut cache = self.cache.lock().expect("solver cache poisoned");
            if cache.len() >= CACHE_LIMIT {
                cache.clear();
            }
            cache.insert(key, Arc::clone(&solution));
        }
        Ok(solution)
    }
}
