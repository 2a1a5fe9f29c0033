//! Closed-loop MPC: fixed-horizon and adaptive runs, recorded step by step,
//! plus an independent re-check of a finished trace.

use crate::adapt::{adapt_step, AdaptationConfig};
use crate::error::Error;
use crate::estimate::{a_posteriori_alpha_with_threshold, EQUILIBRIUM_THRESHOLD};
use crate::model::SystemModel;
use crate::ocp::{shift_controls, OcpSolution, OcpSolver, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Stop once the applied stage cost drops below this level.
    pub cost_threshold: f64,
    pub max_steps: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            cost_threshold: EQUILIBRIUM_THRESHOLD,
            max_steps: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Termination {
    CostThreshold,
    StepLimit,
    Error(Error),
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::CostThreshold => "cost-threshold",
            Termination::StepLimit => "step-limit",
            Termination::Error(_) => "error",
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Termination::Error(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    pub state: Vec<f64>,
    pub horizon: usize,
    pub control: Vec<f64>,
    pub stage_cost: f64,
    /// `V_{N_i}(x(i))`.
    pub value: f64,
    /// Estimated `α`; `None` on reused steps and on the terminal step.
    pub alpha: Option<f64>,
    pub solves: usize,
    pub reused: bool,
    /// Open-loop controls whose cost is `value`.
    pub open_loop: Vec<Vec<f64>>,
    /// `V_{N_i}(x(i+1))` if the step computed it.
    pub successor_value: Option<f64>,
    pub successor_open_loop: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    pub initial_state: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub terminated: Termination,
    pub accumulated_cost: f64,
    /// `N⋆ = max_i N_i` (0 for an empty trace).
    pub n_star: usize,
    pub alpha_bar: Option<f64>,
    pub sampling_period: Option<f64>,
}

impl ClosedLoopTrace {
    pub(crate) fn new(x0: &[f64], alpha_bar: Option<f64>, sampling_period: Option<f64>) -> Self {
        ClosedLoopTrace {
            initial_state: x0.to_vec(),
            records: Vec::new(),
            terminated: Termination::StepLimit,
            accumulated_cost: 0.0,
            n_star: 0,
            alpha_bar,
            sampling_period,
        }
    }

    pub(crate) fn push(&mut self, record: StepRecord) {
        self.accumulated_cost += record.stage_cost;
        self.n_star = self.n_star.max(record.horizon);
        self.records.push(record);
    }

    pub fn horizons(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.horizon).collect()
    }

    pub fn total_solves(&self) -> usize {
        self.records.iter().map(|r| r.solves).sum()
    }

    /// `Σ_{i ≥ n} l_i`.
    pub fn cost_from(&self, n: usize) -> f64 {
        self.records[n..].iter().map(|r| r.stage_cost).sum()
    }
}

fn terminal_record(index: usize, x: &[f64], solution: &OcpSolution, solves: usize) -> StepRecord {
    StepRecord {
        index,
        state: x.to_vec(),
        horizon: solution.horizon(),
        control: solution.controls[0].clone(),
        stage_cost: solution.stage_costs[0],
        value: solution.value,
        alpha: None,
        solves,
        reused: false,
        open_loop: solution.controls.clone(),
        successor_value: None,
        successor_open_loop: None,
    }
}

/// Standard MPC with constant horizon `n`. Each step also solves at the
/// successor state to obtain the a posteriori `α`; that solution is the
/// next step's problem and is reused through the solver cache.
pub fn run_fixed(solver: &OcpSolver, x0: &[f64], n: usize, stop: StopRule) -> ClosedLoopTrace {
    let model = solver.model();
    let mut trace = ClosedLoopTrace::new(x0, None, model.sampling_period());
    if n < 2 {
        trace.terminated = Termination::Error(Error::invalid("fixed horizon must be at least 2"));
        return trace;
    }
    let mut x = x0.to_vec();
    let mut warm: Option<Vec<Vec<f64>>> = None;
    loop {
        let index = trace.records.len();
        if index >= stop.max_steps {
            trace.terminated = Termination::StepLimit;
            break;
        }
        let before = solver.solve_count();
        let solution = match solver.solve(&x, n, warm.as_deref()) {
            Ok(s) => s,
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        let l = solution.stage_costs[0];
        if l < stop.cost_threshold {
            trace.push(terminal_record(
                index,
                &x,
                &solution,
                solver.solve_count() - before,
            ));
            trace.terminated = Termination::CostThreshold;
            break;
        }
        let next = match model.step(&x, &solution.controls[0]) {
            Ok(next) => next,
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        let successor = match solver.solve(&next, n, Some(&shift_controls(&solution.controls, n))) {
            Ok(s) => s,
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        let alpha = a_posteriori_alpha_with_threshold(solution.value, successor.value, l, 0.0).ok();
        trace.push(StepRecord {
            index,
            state: x,
            horizon: n,
            control: solution.controls[0].clone(),
            stage_cost: l,
            value: solution.value,
            alpha,
            solves: solver.solve_count() - before,
            reused: false,
            open_loop: solution.controls.clone(),
            successor_value: Some(successor.value),
            successor_open_loop: Some(successor.controls.clone()),
        });
        warm = Some(successor.controls.clone());
        x = next;
    }
    trace
}

/// Adaptive-horizon MPC starting at the configuration's lowest horizon.
pub fn run_adaptive(
    solver: &OcpSolver,
    x0: &[f64],
    config: &AdaptationConfig,
    stop: StopRule,
) -> ClosedLoopTrace {
    run_adaptive_from(solver, x0, config, config.lowest_horizon(), stop)
}

/// Adaptive-horizon MPC with an explicit first horizon guess.
///
/// Free steps call [`adapt_step`]. When a step certifies a span `ī ≥ 2`,
/// the next `ī − 1` steps apply the stored controls `u⋆(1), …, u⋆(ī−1)`
/// with horizons `N − 1, …, N − ī + 1` and no optimization at all.
pub fn run_adaptive_from(
    solver: &OcpSolver,
    x0: &[f64],
    config: &AdaptationConfig,
    n_initial: usize,
    stop: StopRule,
) -> ClosedLoopTrace {
    let model = solver.model();
    let mut trace = ClosedLoopTrace::new(x0, Some(config.alpha_bar), model.sampling_period());
    if let Err(e) = config.validate() {
        trace.terminated = Termination::Error(e);
        return trace;
    }
    let mut x = x0.to_vec();
    let mut n = n_initial.clamp(config.lowest_horizon(), config.n_max);
    let mut warm: Option<Vec<Vec<f64>>> = None;
    'outer: loop {
        let index = trace.records.len();
        if index >= stop.max_steps {
            trace.terminated = Termination::StepLimit;
            break;
        }
        let before = solver.solve_count();
        let first = match solver.solve(&x, n, warm.as_deref()) {
            Ok(s) => s,
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        if first.stage_costs[0] < stop.cost_threshold {
            trace.push(terminal_record(
                index,
                &x,
                &first,
                solver.solve_count() - before,
            ));
            trace.terminated = Termination::CostThreshold;
            break;
        }
        let plan = match adapt_step(solver, config, &x, n, warm.as_deref()) {
            Ok(plan) => plan,
            Err(e) if e.is_equilibrium() => {
                trace.push(terminal_record(
                    index,
                    &x,
                    &first,
                    solver.solve_count() - before,
                ));
                trace.terminated = Termination::CostThreshold;
                break;
            }
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        let solution = &plan.solution;
        let next = match model.step(&x, &plan.applied_control) {
            Ok(next) => next,
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        let successor = plan.evaluation.successor.as_ref();
        trace.push(StepRecord {
            index,
            state: x,
            horizon: plan.chosen_horizon,
            control: plan.applied_control.clone(),
            stage_cost: solution.stage_costs[0],
            value: solution.value,
            alpha: Some(plan.alpha_achieved),
            solves: solver.solve_count() - before,
            reused: false,
            open_loop: solution.controls.clone(),
            successor_value: successor.map(|s| s.value),
            successor_open_loop: successor.map(|s| s.controls.clone()),
        });
        x = next;

        for (k, (u, cert)) in plan
            .reusable_tail
            .iter()
            .zip(&plan.certificates)
            .enumerate()
        {
            let k = k + 1;
            let index = trace.records.len();
            if index >= stop.max_steps {
                trace.terminated = Termination::StepLimit;
                break 'outer;
            }
            let before = solver.solve_count();
            let (next, l) = match model.transition(&x, u) {
                Ok(t) => t,
                Err(e) => {
                    trace.terminated = Termination::Error(e);
                    break 'outer;
                }
            };
            trace.push(StepRecord {
                index,
                state: x,
                horizon: plan.chosen_horizon - k,
                control: u.clone(),
                stage_cost: l,
                value: cert.value,
                alpha: None,
                solves: solver.solve_count() - before,
                reused: true,
                open_loop: cert.open_loop.clone(),
                successor_value: cert.successor_value,
                successor_open_loop: cert.successor_open_loop.clone(),
            });
            x = next;
            if l < stop.cost_threshold {
                trace.terminated = Termination::CostThreshold;
                break 'outer;
            }
        }

        let skip = plan.certified_span.max(1);
        n = plan.next_horizon;
        warm = Some(solution.controls[skip.min(solution.horizon() - 1)..].to_vec());
    }
    trace
}

/// Independent re-check of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCheck {
    pub index: usize,
    pub reused: bool,
    /// Re-solved `V_{N_i}(x(i))`.
    pub value: f64,
    /// Re-solved `V_{N_i}(x(i+1))`; `None` for the last record.
    pub successor_value: Option<f64>,
    /// `V(x(i)) − V(x(i+1)) − ᾱ·l_i`.
    pub slack: Option<f64>,
    /// `(V(x(i)) − V(x(i+1))) / l_i`.
    pub alpha: Option<f64>,
    /// The recorded successor state equals `f(x(i), u(i))` bit for bit and,
    /// on reused steps, equals the stored open-loop prediction.
    pub replay_exact: bool,
    pub error: Option<String>,
}

/// `α_min · Σ_{i ≥ n} l_i ≤ V_{N⋆}(x(n))·(1 + 1e-6)` at one index.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCheck {
    pub index: usize,
    pub lhs: f64,
    pub value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub steps: Vec<StepCheck>,
    pub sandwich: Vec<SandwichCheck>,
    pub alpha_min: Option<f64>,
}

impl VerificationReport {
    /// Smallest slack over non-reused (`reused = false`) or reused steps.
    pub fn min_slack(&self, reused: bool) -> Option<f64> {
        self.steps
            .iter()
            .filter(|s| s.reused == reused)
            .filter_map(|s| s.slack)
            .reduce(f64::min)
    }

    /// Steps whose slack is below `-tol`, or whose check failed.
    pub fn violations(&self, tol: f64) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| s.error.is_some() || s.slack.is_some_and(|v| v < -tol))
            .map(|s| s.index)
            .collect()
    }

    pub fn replay_exact(&self) -> bool {
        self.steps.iter().all(|s| s.replay_exact)
    }

    pub fn sandwich_holds(&self) -> bool {
        self.sandwich.iter().all(|s| s.holds)
    }
}

const SANDWICH_RTOL: f64 = 1e-6;

/// Recomputes every value of the trace with a fresh, uncached solver and
/// checks `V_N(x(i)) ≥ V_N(x(i+1)) + ᾱ·l_i` step by step.
///
/// Each re-solve is warm-started from the open-loop controls stored in the
/// record, so a trace produced by converged solves is reproduced exactly.
/// Records without an estimate that are not reused (the terminal step) get
/// no slack. The sandwich uses `α_min` over the re-solved ratios.
pub fn verify_trace(
    trace: &ClosedLoopTrace,
    model: &SystemModel,
    options: &SolverOptions,
    alpha_bar: f64,
) -> VerificationReport {
    let solver = OcpSolver::without_cache(model.clone(), *options);
    let records = &trace.records;
    let mut report = VerificationReport::default();
    let mut origin = 0;

    for (i, r) in records.iter().enumerate() {
        if !r.reused {
            origin = i;
        }
        let next_state = records.get(i + 1).map(|n| &n.state);
        let mut replay_exact = match (next_state, model.step(&r.state, &r.control)) {
            (Some(expected), Ok(x)) => &x == expected,
            (Some(_), Err(_)) => false,
            (None, _) => true,
        };
        if r.reused {
            let o = &records[origin];
            let k = i - origin;
            replay_exact &= o.open_loop.get(k) == Some(&r.control)
                && model
                    .rollout(&o.state, &o.open_loop[..k])
                    .map(|states| states[k] == r.state)
                    .unwrap_or(false);
        }
        let mut check = StepCheck {
            index: r.index,
            reused: r.reused,
            value: f64::NAN,
            successor_value: None,
            slack: None,
            alpha: None,
            replay_exact,
            error: None,
        };
        match solver.solve(&r.state, r.horizon, Some(&r.open_loop)) {
            Ok(s) => check.value = s.value,
            Err(e) => check.error = Some(e.to_string()),
        }
        let checked = r.alpha.is_some() || r.reused;
        if let (true, Some(next), None) = (checked, next_state, &check.error) {
            let warm = r
                .successor_open_loop
                .clone()
                .unwrap_or_else(|| shift_controls(&r.open_loop, r.horizon));
            match solver.solve(next, r.horizon, Some(&warm)) {
                Ok(s) => {
                    let decrease = check.value - s.value;
                    check.successor_value = Some(s.value);
                    check.slack = Some(decrease - alpha_bar * r.stage_cost);
                    if r.stage_cost > 0.0 {
                        check.alpha = Some(decrease / r.stage_cost);
                    }
                }
                Err(e) => check.error = Some(e.to_string()),
            }
        }
        report.steps.push(check);
    }

    report.alpha_min = report
        .steps
        .iter()
        .filter(|s| !s.reused)
        .filter_map(|s| s.alpha)
        .reduce(f64::min);
    let Some(alpha_min) = report.alpha_min else {
        return report;
    };
    let n_star = trace.n_star;
    let mut tail = 0.0;
    let mut sandwich = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate().rev() {
        tail += r.stage_cost;
        let value = if r.horizon == n_star {
            report.steps[i].value
        } else {
            solver
                .solve(&r.state, n_star, Some(&r.open_loop))
                .map(|s| s.value)
                .unwrap_or(f64::NAN)
        };
        let lhs = alpha_min * tail;
        sandwich.push(SandwichCheck {
            index: r.index,
            lhs,
            value,
            holds: lhs <= value * (1.0 + SANDWICH_RTOL),
        });
    }
    sandwich.reverse();
    report.sandwich = sandwich;
    report
}
