use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;

use super::config::{ConfigError, ExperimentConfig, LqSpec, ModelSelector, RunMode};
use super::output::{
    emit_figure_data, summary_csv, trace_csv, write_atomic, FigureKind, SummaryRow,
};
use crate::bench::{dp_enumerate, CraneModel, FiniteControlSystem, LqSystem, CRANE_INITIAL_STATE};
use crate::closed_loop::{
    run_adaptive_from, run_fixed, ClosedLoopTrace, StepRecord, StopRule, Termination,
};
use crate::model::{Interval, SystemModel};
use crate::ocp::OcpSolver;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub jobs: usize,
    pub quiet: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 1,
            quiet: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: String,
    pub trace: ClosedLoopTrace,
    pub summary: SummaryRow,
    pub trace_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunOutcome>,
    pub summary_path: PathBuf,
    pub figure_paths: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn failed(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.trace.terminated.is_error())
    }

    /// 0 when every run succeeded, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed().next().is_some() {
            3
        } else {
            0
        }
    }
}

enum Plant {
    Continuous(SystemModel),
    Enumerated(FiniteControlSystem),
}

fn config_error(key: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError {
        line: None,
        key: Some(key.to_owned()),
        message: e.to_string(),
    }
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn lq_model(spec: &LqSpec, key: &str) -> Result<SystemModel, ConfigError> {
    let lq = LqSystem::new(
        matrix(&spec.a),
        matrix(&spec.b),
        matrix(&spec.q),
        matrix(&spec.r),
    )
    .map_err(|e| config_error(key, e))?;
    let m = lq.control_dim();
    let model = lq.model();
    match (&spec.u_lo, &spec.u_hi) {
        (None, None) => Ok(model),
        (lo, hi) => {
            let lo = lo.clone().unwrap_or_else(|| vec![f64::NEG_INFINITY; m]);
            let hi = hi.clone().unwrap_or_else(|| vec![f64::INFINITY; m]);
            let bounds = lo
                .iter()
                .zip(&hi)
                .map(|(&l, &h)| Interval::new(l, h))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| config_error(key, e))?;
            model
                .with_control_bounds(bounds)
                .map_err(|e| config_error(key, e))
        }
    }
}

fn build_plant(cfg: &ExperimentConfig) -> Result<(Plant, Vec<f64>), ConfigError> {
    let (plant, default_x0) = match &cfg.model {
        ModelSelector::Crane => {
            let model = CraneModel::default()
                .system_model(cfg.sampling_period, cfg.integrator_tolerance)
                .map_err(|e| config_error("model", e))?;
            (Plant::Continuous(model), CRANE_INITIAL_STATE.to_vec())
        }
        ModelSelector::Lq => {
            let model = lq_model(&cfg.lq, "lq")?;
            let x0 = cfg
                .lq
                .x0
                .clone()
                .unwrap_or_else(|| vec![1.0; model.state_dim()]);
            (Plant::Continuous(model), x0)
        }
        ModelSelector::File(path) => {
            let spec = LqSpec::from_file(path)?;
            let model = lq_model(&spec, "model.path")?;
            let x0 = spec
                .x0
                .clone()
                .unwrap_or_else(|| vec![1.0; model.state_dim()]);
            (Plant::Continuous(model), x0)
        }
        ModelSelector::Finite => {
            let f = cfg.finite;
            let sys = FiniteControlSystem::scalar_grid(f.lo, f.hi, f.points)
                .map_err(|e| config_error("finite", e))?;
            (Plant::Enumerated(sys), vec![1.0])
        }
    };
    let x0 = cfg.initial_state.clone().unwrap_or(default_x0);
    let dim = match &plant {
        Plant::Continuous(m) => m.state_dim(),
        Plant::Enumerated(s) => s.model().state_dim(),
    };
    if x0.len() != dim || x0.iter().any(|v| !v.is_finite()) {
        return Err(config_error(
            "model.x0",
            format!("initial state must have {dim} finite entries"),
        ));
    }
    Ok((plant, x0))
}

#[derive(Debug, Clone, Copy)]
enum RunSpec {
    Fixed(usize),
    Adaptive(f64),
}

impl RunSpec {
    fn label(&self) -> String {
        match self {
            RunSpec::Fixed(n) => format!("fixed_N{n}"),
            RunSpec::Adaptive(a) => format!("alpha_{a}"),
        }
    }
}

fn execute(cfg: &ExperimentConfig, plant: &Plant, x0: &[f64], spec: RunSpec) -> ClosedLoopTrace {
    match (plant, spec) {
        (Plant::Continuous(model), RunSpec::Fixed(n)) => {
            let solver = OcpSolver::new(model.clone(), cfg.solver);
            run_fixed(&solver, x0, n, cfg.stop)
        }
        (Plant::Continuous(model), RunSpec::Adaptive(alpha_bar)) => {
            let solver = OcpSolver::new(model.clone(), cfg.solver);
            let config = cfg.adaptation.with_alpha_bar(alpha_bar);
            let n = cfg.initial_horizon.unwrap_or(config.lowest_horizon());
            run_adaptive_from(&solver, x0, &config, n, cfg.stop)
        }
        (Plant::Enumerated(sys), RunSpec::Fixed(n)) => run_enumerated(sys, x0, n, cfg.stop),
        (Plant::Enumerated(_), RunSpec::Adaptive(_)) => unreachable!("rejected by validation"),
    }
}

/// Fixed-horizon MPC whose controller is the exhaustive search over the
/// finite control set.
pub fn run_enumerated(
    sys: &FiniteControlSystem,
    x0: &[f64],
    n: usize,
    stop: StopRule,
) -> ClosedLoopTrace {
    let model = sys.model();
    let mut trace = ClosedLoopTrace::new(x0, None, model.sampling_period());
    let mut x = x0.to_vec();
    let mut current = dp_enumerate(sys, &x, n);
    loop {
        let index = trace.records.len();
        if index >= stop.max_steps {
            trace.terminated = Termination::StepLimit;
            break;
        }
        let (value, seq) = match current {
            Ok(ok) => ok,
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        let (next, l) = match model.transition(&x, &seq[0]) {
            Ok(t) => t,
            Err(e) => {
                trace.terminated = Termination::Error(e);
                break;
            }
        };
        let mut record = StepRecord {
            index,
            state: x.clone(),
            horizon: n,
            control: seq[0].clone(),
            stage_cost: l,
            value,
            alpha: None,
            solves: 1,
            reused: false,
            open_loop: seq,
            successor_value: None,
            successor_open_loop: None,
        };
        if l < stop.cost_threshold {
            trace.push(record);
            trace.terminated = Termination::CostThreshold;
            break;
        }
        let successor = dp_enumerate(sys, &next, n);
        if let Ok((v_next, seq_next)) = &successor {
            record.alpha = Some((value - v_next) / l);
            record.successor_value = Some(*v_next);
            record.successor_open_loop = Some(seq_next.clone());
            record.solves += 1;
        }
        trace.push(record);
        current = successor;
        x = next;
    }
    trace
}

/// Runs every configured closed loop, writes one trace file per run, the
/// summary and the figure data into the output directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    options: RunOptions,
) -> Result<ExperimentReport, ExperimentError> {
    let (plant, x0) = build_plant(cfg)?;
    let specs: Vec<RunSpec> = match cfg.mode {
        RunMode::Fixed => cfg.horizons.iter().map(|&n| RunSpec::Fixed(n)).collect(),
        RunMode::Adaptive => cfg
            .alpha_bars
            .iter()
            .map(|&a| RunSpec::Adaptive(a))
            .collect(),
    };

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(ClosedLoopTrace, f64)>>> = Mutex::new(vec![None; specs.len()]);
    let jobs = options.jobs.clamp(1, specs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&spec) = specs.get(i) else { break };
                let start = Instant::now();
                let trace = execute(cfg, &plant, &x0, spec);
                let elapsed = start.elapsed().as_secs_f64();
                if !options.quiet {
                    eprintln!(
                        "{}: {} after {} steps, cost {:.6e}, N* = {}",
                        spec.label(),
                        trace.terminated.as_str(),
                        trace.records.len(),
                        trace.accumulated_cost,
                        trace.n_star
                    );
                }
                results.lock().expect("result slot poisoned")[i] = Some((trace, elapsed));
            });
        }
    });

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut runs = Vec::with_capacity(specs.len());
    for (spec, slot) in specs
        .iter()
        .zip(results.into_inner().expect("result slot poisoned"))
    {
        let (trace, wall_time) = slot.expect("every run finishes");
        let label = spec.label();
        let file = format!("trace_{label}.csv");
        let trace_path = dir.join(&file);
        write_atomic(&trace_path, &trace_csv(&trace)?)?;
        let summary = SummaryRow {
            label: label.clone(),
            alpha_bar: trace.alpha_bar,
            horizon: match spec {
                RunSpec::Fixed(n) => Some(*n),
                RunSpec::Adaptive(_) => None,
            },
            accumulated_cost: trace.accumulated_cost,
            steps: trace.records.len(),
            n_star: trace.n_star,
            total_solves: trace.total_solves(),
            wall_time,
            terminated: match &trace.terminated {
                Termination::Error(e) => format!("error: {e}"),
                other => other.as_str().to_owned(),
            },
            trace_file: file,
        };
        runs.push(RunOutcome {
            label,
            trace,
            summary,
            trace_path,
        });
    }

    let rows: Vec<SummaryRow> = runs.iter().map(|r| r.summary.clone()).collect();
    let summary_path = dir.join("summary.csv");
    write_atomic(&summary_path, &summary_csv(&rows)?)?;

    let labelled: Vec<(&str, &ClosedLoopTrace)> =
        runs.iter().map(|r| (r.label.as_str(), &r.trace)).collect();
    let mut figure_paths = Vec::new();
    if !labelled.is_empty() {
        if cfg.mode == RunMode::Adaptive {
            figure_paths.push(emit_figure_data(&labelled, FigureKind::AlphaVsCost, dir)?);
        }
        figure_paths.push(emit_figure_data(&labelled, FigureKind::HorizonVsTime, dir)?);
    }

    Ok(ExperimentReport {
        runs,
        summary_path,
        figure_paths,
    })
}
