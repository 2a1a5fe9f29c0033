//! Horizon adaptation: pick `N_i` per step so that the local suboptimality
//! degree reaches a prescribed `ᾱ`.
//!
//! A step first evaluates `α(N)` at the proposed horizon. If it falls short
//! the horizon is prolonged one at a time up to `n_max`. Once `α ≥ ᾱ`, a
//! shortening check decides how many of the following steps can replay the
//! stored open-loop controls with horizons `N − 1, N − 2, …` without any
//! new optimization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimate::{
    a_posteriori_alpha_with_threshold, a_priori_alpha, gamma_bar, gamma_fit_general, EstimatorKind,
    SuboptimalityReport, EQUILIBRIUM_THRESHOLD,
};
use crate::ocp::{resize_controls, shift_controls, OcpSolution, OcpSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShorteningMode {
    /// Check the decrease condition along the prediction and reuse the
    /// stored controls over the certified span.
    Certified,
    /// Propose `N − 1` for the next step and let that step's own estimate
    /// decide.
    HeuristicDecrement,
}

impl ShorteningMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShorteningMode::Certified => "certified",
            ShorteningMode::HeuristicDecrement => "heuristic-decrement",
        }
    }
}

impl std::str::FromStr for ShorteningMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "certified" => Ok(ShorteningMode::Certified),
            "heuristic-decrement" => Ok(ShorteningMode::HeuristicDecrement),
            other => Err(format!(
                "unknown shortening mode '{other}' (certified | heuristic-decrement)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationConfig {
    pub alpha_bar: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub n0: usize,
    pub n_hat: usize,
    pub estimator: EstimatorKind,
    pub shortening: ShorteningMode,
    pub equilibrium_threshold: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            alpha_bar: 0.5,
            n_min: 2,
            n_max: 20,
            n0: 2,
            n_hat: 2,
            estimator: EstimatorKind::APosteriori,
            shortening: ShorteningMode::Certified,
            equilibrium_threshold: EQUILIBRIUM_THRESHOLD,
        }
    }
}

impl AdaptationConfig {
    pub fn with_alpha_bar(mut self, alpha_bar: f64) -> Self {
        self.alpha_bar = alpha_bar;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_bar > 0.0 && self.alpha_bar < 1.0) {
            return Err(Error::invalid(format!(
                "alpha_bar must lie in (0, 1), got {}",
                self.alpha_bar
            )));
        }
        if self.n_min < 2 {
            return Err(Error::invalid("n_min must be at least 2"));
        }
        if self.n_min > self.n_max {
            return Err(Error::invalid(format!(
                "n_min = {} exceeds n_max = {}",
                self.n_min, self.n_max
            )));
        }
        if self.n0 < 2 || self.n_hat < 2 {
            return Err(Error::invalid("n0 and n_hat must be at least 2"));
        }
        if self.estimator == EstimatorKind::APriori && self.lowest_horizon() > self.n_max {
            return Err(Error::invalid("n0 / n_hat exceed n_max"));
        }
        if !(self.equilibrium_threshold >= 0.0) {
            return Err(Error::invalid("equilibrium threshold must be nonnegative"));
        }
        Ok(())
    }

    /// Smallest horizon the configured estimator can work with.
    pub fn lowest_horizon(&self) -> usize {
        match self.estimator {
            EstimatorKind::APosteriori => self.n_min,
            EstimatorKind::APriori => self.n_min.max(self.n0).max(self.n_hat),
        }
    }
}

/// `α(N)` at one state, with whatever the estimator had to compute.
#[derive(Debug, Clone)]
pub struct AlphaEvaluation {
    pub alpha: f64,
    pub report: SuboptimalityReport,
    /// `V_N` solve at the successor state (a posteriori only).
    pub successor: Option<Arc<OcpSolution>>,
}

/// Values backing a reused step `i + k` of a certified span.
#[derive(Debug, Clone, PartialEq)]
pub struct ReuseCertificate {
    /// `V_{N−k}(x(i+k))`.
    pub value: f64,
    pub open_loop: Vec<Vec<f64>>,
    /// `V_{N−k}(x(i+k+1))`, when it was solved for the certificate.
    pub successor_value: Option<f64>,
    pub successor_open_loop: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default)]
pub struct Shortening {
    /// `ī`: the decrease condition holds for all `0 ≤ k ≤ ī`.
    pub span: usize,
    /// `u⋆(1), …, u⋆(ī−1)`.
    pub tail: Vec<Vec<f64>>,
    /// One entry per element of `tail`.
    pub certificates: Vec<ReuseCertificate>,
}

#[derive(Debug, Clone)]
pub struct AdaptationPlan {
    pub chosen_horizon: usize,
    pub applied_control: Vec<f64>,
    pub alpha_achieved: f64,
    pub certified_span: usize,
    pub reusable_tail: Vec<Vec<f64>>,
    pub solves_performed: usize,
    pub solution: Arc<OcpSolution>,
    pub evaluation: AlphaEvaluation,
    pub certificates: Vec<ReuseCertificate>,
    /// Starting horizon for the next free step.
    pub next_horizon: usize,
}

/// Computes `α(N)` for `solution` with the configured estimator.
pub fn evaluate_alpha(
    solver: &OcpSolver,
    config: &AdaptationConfig,
    solution: &Arc<OcpSolution>,
) -> Result<AlphaEvaluation> {
    let n = solution.horizon();
    match config.estimator {
        EstimatorKind::APosteriori => {
            let l = solution.stage_costs[0];
            if l <= config.equilibrium_threshold {
                return Err(Error::EquilibriumReached {
                    stage_cost: l,
                    threshold: config.equilibrium_threshold,
                });
            }
            let warm = shift_controls(&solution.controls, n);
            let successor = solver.solve(&solution.trajectory[1], n, Some(&warm))?;
            let alpha = a_posteriori_alpha_with_threshold(
                solution.value,
                successor.value,
                l,
                config.equilibrium_threshold,
            )?;
            Ok(AlphaEvaluation {
                alpha,
                report: SuboptimalityReport::a_posteriori(alpha),
                successor: Some(successor),
            })
        }
        EstimatorKind::APriori => {
            let (gamma, components) = gamma_fit_general(
                solution,
                config.n0,
                config.n0,
                n,
                solver,
                config.equilibrium_threshold,
            )?;
            let mut report = a_priori_alpha(gamma, n, config.n0)?;
            report.components = components;
            let alpha = if report.valid {
                report.alpha
            } else {
                report.alpha.min(0.0)
            };
            Ok(AlphaEvaluation {
                alpha,
                report,
                successor: None,
            })
        }
    }
}

/// Increases the horizon one step at a time from `n_from` until
/// `α(n) ≥ ᾱ`. Each candidate is warm-started from the previous solution
/// padded by its last control.
pub fn prolong(
    solver: &OcpSolver,
    config: &AdaptationConfig,
    x: &[f64],
    n_from: usize,
    from: &OcpSolution,
) -> Result<(usize, Arc<OcpSolution>, AlphaEvaluation)> {
    if n_from >= config.n_max {
        return Err(Error::invalid(format!(
            "prolongation needs n_from < n_max ({n_from} ≥ {})",
            config.n_max
        )));
    }
    let before = solver.solve_count();
    let mut warm = from.controls.clone();
    let mut last_alpha = f64::NAN;
    for n in (n_from + 1)..=config.n_max {
        let solution = solver.solve(x, n, Some(&warm))?;
        let eval = evaluate_alpha(solver, config, &solution)?;
        if eval.alpha >= config.alpha_bar {
            return Ok((n, solution, eval));
        }
        last_alpha = eval.alpha;
        warm = resize_controls(&solution.controls, n + 1);
    }
    Err(Error::HorizonCapReached {
        n_max: config.n_max,
        alpha_at_cap: last_alpha,
        alpha_bar: config.alpha_bar,
        solves: solver.solve_count() - before,
    })
}

/// Certified span from the a posteriori decrease condition
/// `V_{N−k}(x(k)) − V_{N−k}(x(k+1)) ≥ ᾱ·l(x(k), u⋆(k))` along the
/// prediction, for `k = 1, 2, …` while `k < N − n_min`.
pub fn shorten_certified(
    solver: &OcpSolver,
    config: &AdaptationConfig,
    solution: &OcpSolution,
) -> Result<Shortening> {
    let n = solution.horizon();
    let mut span = 0;
    let mut certificates = Vec::new();
    for k in 1..n.saturating_sub(config.n_min) {
        let l = solution.stage_costs[k];
        if l <= config.equilibrium_threshold {
            break;
        }
        let h = n - k;
        let here = solver.solve(&solution.trajectory[k], h, Some(&solution.controls[k..]))?;
        let warm = shift_controls(&here.controls, h);
        let next = solver.solve(&solution.trajectory[k + 1], h, Some(&warm))?;
        if here.value - next.value < config.alpha_bar * l {
            break;
        }
        span = k;
        certificates.push(ReuseCertificate {
            value: here.value,
            open_loop: here.controls.clone(),
            successor_value: Some(next.value),
            successor_open_loop: Some(next.controls.clone()),
        });
    }
    Ok(finish_shortening(solution, span, certificates))
}

/// Certified span from the a priori growth condition: for each
/// `k = 0, …, ī` the constant fitted on the shortened horizon `N − k`
/// must stay strictly below `γ̄(ᾱ, N − k)`. Requires `ī < N − N₀ − 1`.
pub fn shorten_apriori(
    solver: &OcpSolver,
    config: &AdaptationConfig,
    solution: &OcpSolution,
) -> Result<Shortening> {
    let n = solution.horizon();
    // exclusive bounds on ī
    let limit = n
        .saturating_sub(config.n0 + 1)
        .min(n.saturating_sub(config.n_min))
        .min((n + 1).saturating_sub(config.n_hat));
    let mut span = 0;
    for k in 0..limit {
        let fit = gamma_fit_general(
            solution,
            config.n0,
            config.n_hat,
            n - k,
            solver,
            config.equilibrium_threshold,
        );
        let gamma = match fit {
            Ok((g, _)) => g,
            Err(e) if e.is_equilibrium() => break,
            Err(e) => return Err(e),
        };
        if gamma >= gamma_bar(config.alpha_bar, n - k, config.n_hat)? {
            break;
        }
        span = k;
    }
    let certificates = (1..span)
        .map(|k| ReuseCertificate {
            value: solution.tail_value(k),
            open_loop: solution.controls[k..].to_vec(),
            successor_value: None,
            successor_open_loop: None,
        })
        .collect();
    Ok(finish_shortening(solution, span, certificates))
}

fn finish_shortening(
    solution: &OcpSolution,
    span: usize,
    mut certificates: Vec<ReuseCertificate>,
) -> Shortening {
    let tail: Vec<Vec<f64>> = if span >= 2 {
        solution.controls[1..span].to_vec()
    } else {
        Vec::new()
    };
    certificates.truncate(tail.len());
    Shortening {
        span,
        tail,
        certificates,
    }
}

/// One adaptive MPC step at `x`, starting the horizon search at `n_start`.
pub fn adapt_step(
    solver: &OcpSolver,
    config: &AdaptationConfig,
    x: &[f64],
    n_start: usize,
    warm: Option<&[Vec<f64>]>,
) -> Result<AdaptationPlan> {
    config.validate()?;
    if n_start < config.n_min || n_start > config.n_max {
        return Err(Error::invalid(format!(
            "starting horizon {n_start} outside [{}, {}]",
            config.n_min, config.n_max
        )));
    }
    let n_start = n_start.max(config.lowest_horizon());
    let before = solver.solve_count();

    let mut solution = solver.solve(x, n_start, warm)?;
    let mut evaluation = evaluate_alpha(solver, config, &solution)?;
    let mut horizon = n_start;
    if evaluation.alpha < config.alpha_bar {
        if n_start >= config.n_max {
            return Err(Error::HorizonCapReached {
                n_max: config.n_max,
                alpha_at_cap: evaluation.alpha,
                alpha_bar: config.alpha_bar,
                solves: solver.solve_count() - before,
            });
        }
        let (n, s, e) = prolong(solver, config, x, n_start, &solution)?;
        horizon = n;
        solution = s;
        evaluation = e;
    }

    let shortening = match (config.shortening, config.estimator) {
        (ShorteningMode::HeuristicDecrement, _) => Shortening::default(),
        (ShorteningMode::Certified, EstimatorKind::APosteriori) => {
            shorten_certified(solver, config, &solution)?
        }
        (ShorteningMode::Certified, EstimatorKind::APriori) => {
            shorten_apriori(solver, config, &solution)?
        }
    };

    let next_horizon = horizon
        .saturating_sub(shortening.span.max(1))
        .max(config.lowest_horizon());

    Ok(AdaptationPlan {
        chosen_horizon: horizon,
        applied_control: solution.controls[0].clone(),
        alpha_achieved: evaluation.alpha,
        certified_span: shortening.span,
        reusable_tail: shortening.tail,
        solves_performed: solver.solve_count() - before,
        solution,
        evaluation,
        certificates: shortening.certificates,
        next_horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::SolverOptions;

    fn lq_solver() -> OcpSolver {
        let m = crate::model::SystemModel::from_fn(
            1,
            1,
            |x, u, o| o[0] = x[0] + u[0],
            |x, u| x[0] * x[0] + u[0] * u[0],
        )
        .unwrap();
        OcpSolver::new(m, SolverOptions::default())
    }

    #[test]
    fn config_validation() {
        let ok = AdaptationConfig::default();
        assert!(ok.validate().is_ok());
        assert!(ok.with_alpha_bar(1.5).validate().is_err());
        assert!(ok.with_alpha_bar(0.0).validate().is_err());
        let bad = AdaptationConfig {
            n_min: 5,
            n_max: 4,
            ..ok
        };
        assert!(bad.validate().is_err());
        let bad = AdaptationConfig { n_min: 1, ..ok };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn no_prolongation_when_alpha_suffices() {
        let solver = lq_solver();
        let cfg = AdaptationConfig {
            shortening: ShorteningMode::HeuristicDecrement,
            ..AdaptationConfig::default()
        };
        let plan = adapt_step(&solver, &cfg, &[1.0], 2, None).unwrap();
        assert_eq!(plan.chosen_horizon, 2);
        assert!((plan.alpha_achieved - 0.9).abs() < 1e-6);
        assert!((plan.applied_control[0] + 0.5).abs() < 1e-6);
        assert_eq!(plan.certified_span, 0);
        assert!(plan.reusable_tail.is_empty());
        assert_eq!(plan.next_horizon, 2);
    }

    #[test]
    fn equilibrium_passes_through() {
        let solver = lq_solver();
        let err = adapt_step(&solver, &AdaptationConfig::default(), &[0.0], 2, None).unwrap_err();
        assert!(err.is_equilibrium());
    }

    #[test]
    fn cap_is_reported() {
        let solver = lq_solver();
        let cfg = AdaptationConfig {
            alpha_bar: 0.999_999_9,
            n_max: 4,
            ..AdaptationConfig::default()
        };
        match adapt_step(&solver, &cfg, &[1.0], 2, None) {
            Err(Error::HorizonCapReached { n_max, .. }) => assert_eq!(n_max, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prolong_requires_room() {
        let solver = lq_solver();
        let cfg = AdaptationConfig {
            n_max: 3,
            ..AdaptationConfig::default()
        };
        let s = solver.solve(&[1.0], 3, None).unwrap();
        assert!(prolong(&solver, &cfg, &[1.0], 3, &s).is_err());
    }

    #[test]
    fn apriori_span_is_empty_at_boundary() {
        let solver = lq_solver();
        let cfg = AdaptationConfig {
            estimator: EstimatorKind::APriori,
            ..AdaptationConfig::default()
        };
        let s = solver.solve(&[1.0], cfg.n0 + 1, None).unwrap();
        let sh = shorten_apriori(&solver, &cfg, &s).unwrap();
        assert_eq!(sh.span, 0);
        assert!(sh.tail.is_empty());
    }
}
