//! Local suboptimality degree `α` of the MPC feedback.
//!
//! The a posteriori estimate reads `α` off the relaxed Lyapunov inequality
//! `V_N(x) ≥ V_N(x⁺) + α·l(x, μ_N(x))` once the successor value is known.
//! The a priori estimate fits a growth constant `γ` along the open-loop
//! prediction and maps it to
//! `α = ((γ+1)^(N−N₀) − γ^(N−N₀+2)) / (γ+1)^(N−N₀)`.

use crate::error::{Error, Result};
use crate::ocp::{resize_controls, OcpSolution, OcpSolver};

/// Stage costs at or below this level mean the equilibrium is reached.
pub const EQUILIBRIUM_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    APosteriori,
    APriori,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::APosteriori => "a-posteriori",
            EstimatorKind::APriori => "a-priori",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "a-posteriori" => Ok(EstimatorKind::APosteriori),
            "a-priori" => Ok(EstimatorKind::APriori),
            other => Err(format!(
                "unknown estimator '{other}' (a-posteriori | a-priori)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuboptimalityReport {
    pub alpha: f64,
    pub kind: EstimatorKind,
    pub gamma: Option<f64>,
    pub n0: Option<usize>,
    /// For the a priori kind: `(γ+1)^(N−N₀) > γ^(N−N₀+2)`.
    pub valid: bool,
    /// Per-inequality γ candidates (a priori only).
    pub components: Vec<f64>,
}

impl SuboptimalityReport {
    pub fn a_posteriori(alpha: f64) -> Self {
        SuboptimalityReport {
            alpha,
            kind: EstimatorKind::APosteriori,
            gamma: None,
            n0: None,
            valid: alpha > 0.0,
            components: Vec::new(),
        }
    }
}

fn check_stage_cost(stage_cost: f64, threshold: f64) -> Result<()> {
    if stage_cost <= threshold {
        Err(Error::EquilibriumReached {
            stage_cost,
            threshold,
        })
    } else {
        Ok(())
    }
}

/// Largest `α` with `v_now ≥ v_next + α·stage_cost`.
pub fn a_posteriori_alpha(v_now: f64, v_next: f64, stage_cost: f64) -> Result<f64> {
    a_posteriori_alpha_with_threshold(v_now, v_next, stage_cost, EQUILIBRIUM_THRESHOLD)
}

pub fn a_posteriori_alpha_with_threshold(
    v_now: f64,
    v_next: f64,
    stage_cost: f64,
    threshold: f64,
) -> Result<f64> {
    check_stage_cost(stage_cost, threshold)?;
    Ok((v_now - v_next) / stage_cost)
}

/// `γ^(m+2) / (γ+1)^m` evaluated in the log domain.
fn growth_ratio(gamma: f64, m: usize) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let m = m as f64;
    ((m + 2.0) * gamma.ln() - m * gamma.ln_1p()).exp()
}

/// Closed-form a priori `α(γ, N, N₀)`.
pub fn a_priori_alpha(gamma: f64, n: usize, n0: usize) -> Result<SuboptimalityReport> {
    if n0 < 2 || n < n0 {
        return Err(Error::invalid(format!(
            "need n ≥ n0 ≥ 2, got n = {n}, n0 = {n0}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    let m = n - n0;
    let valid = if gamma == 0.0 {
        true
    } else {
        (m as f64) * gamma.ln_1p() > (m as f64 + 2.0) * gamma.ln()
    };
    Ok(SuboptimalityReport {
        alpha: 1.0 - growth_ratio(gamma, m),
        kind: EstimatorKind::APriori,
        gamma: Some(gamma),
        n0: Some(n0),
        valid,
        components: Vec::new(),
    })
}

/// Largest `γ` whose a priori `α` still reaches `alpha_bar`.
pub fn gamma_bar(alpha_bar: f64, n: usize, n0: usize) -> Result<f64> {
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::invalid(format!(
            "alpha_bar must lie in (0, 1), got {alpha_bar}"
        )));
    }
    let alpha = |g: f64| a_priori_alpha(g, n, n0).map(|r| r.alpha);
    if alpha(0.0)? < alpha_bar {
        return Err(Error::NoFeasibleGamma(alpha_bar));
    }
    let mut hi = 1.0;
    while alpha(hi)? >= alpha_bar {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(hi);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if alpha(mid)? >= alpha_bar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Smallest `γ ≥ 0` satisfying the growth inequalities along the open-loop
/// prediction of `solution`:
///
/// * `V_{N₀}(x(N−N₀)) ≤ (γ+1)·max_{j=2..N₀} l(x(N−j), μ_{j−1}(x(N−j)))`
/// * `V_k(x(N−k)) ≤ (γ+1)·l(x(N−k), μ_k(x(N−k)))` for `k = N₀+1..N`
///
/// Each `V_m`, `μ_m` comes from an auxiliary solve at the predicted point,
/// warm-started from the matching slice of the stored controls.
pub fn gamma_fit(solution: &OcpSolution, n0: usize, solver: &OcpSolver) -> Result<(f64, Vec<f64>)> {
    gamma_fit_general(
        solution,
        n0,
        n0,
        solution.horizon(),
        solver,
        EQUILIBRIUM_THRESHOLD,
    )
}

/// `gamma_fit` with a separate threshold horizon for the first inequality
/// and an upper end `k_upper` for the second.
pub(crate) fn gamma_fit_general(
    solution: &OcpSolution,
    n0: usize,
    threshold_horizon: usize,
    k_upper: usize,
    solver: &OcpSolver,
    eq_threshold: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = solution.horizon();
    if n0 < 2 || threshold_horizon < 2 || threshold_horizon > n || n0 > n || k_upper > n {
        return Err(Error::invalid(format!(
            "gamma fit needs 2 ≤ n0, threshold ≤ N (n0 = {n0}, threshold = {threshold_horizon}, N = {n})"
        )));
    }
    let aux = |point: usize, horizon: usize| -> Result<std::sync::Arc<OcpSolution>> {
        if point == 0 && horizon == n {
            return Ok(std::sync::Arc::new(solution.clone()));
        }
        let warm = resize_controls(&solution.controls[point..], horizon);
        solver
            .solve(&solution.trajectory[point], horizon, Some(&warm))
            .map_err(|e| Error::SolverFailure(Box::new(e)))
    };

    let mut components = Vec::new();

    let mut denom: f64 = 0.0;
    for j in 2..=threshold_horizon {
        let s = aux(n - j, j - 1)?;
        denom = denom.max(s.stage_costs[0]);
    }
    check_stage_cost(denom, eq_threshold)?;
    let v = aux(n - threshold_horizon, n0)?.value;
    components.push(v / denom - 1.0);

    for k in (threshold_horizon + 1)..=k_upper {
        let s = aux(n - k, k)?;
        check_stage_cost(s.stage_costs[0], eq_threshold)?;
        components.push(s.value / s.stage_costs[0] - 1.0);
    }

    let gamma = components.iter().fold(0.0f64, |g, c| g.max(*c));
    Ok((gamma, components))
}

/// A priori report for the solution's own horizon.
pub fn a_priori_report(
    solution: &OcpSolution,
    n0: usize,
    solver: &OcpSolver,
) -> Result<SuboptimalityReport> {
    let (gamma, components) = gamma_fit(solution, n0, solver)?;
    let mut report = a_priori_alpha(gamma, solution.horizon(), n0)?;
    report.components = components;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_posteriori_examples() {
        assert_eq!(a_posteriori_alpha(10.0, 7.0, 4.0).unwrap(), 0.75);
        assert_eq!(a_posteriori_alpha(3.0, 3.0, 1.0).unwrap(), 0.0);
        let a = a_posteriori_alpha(1.5, 0.375, 1.25).unwrap();
        assert!((a - 0.9).abs() < 1e-15);
    }

    #[test]
    fn a_posteriori_at_equilibrium() {
        let e = a_posteriori_alpha(1.0, 0.5, 1e-4).unwrap_err();
        assert!(e.is_equilibrium());
        assert!(a_posteriori_alpha(1.0, 0.5, EQUILIBRIUM_THRESHOLD).is_err());
    }

    #[test]
    fn a_priori_examples() {
        for n in 2..8 {
            let r = a_priori_alpha(0.0, n, 2).unwrap();
            assert_eq!(r.alpha, 1.0);
            assert!(r.valid);
        }
        let r = a_priori_alpha(1.0, 5, 2).unwrap();
        assert!((r.alpha - 0.875).abs() < 1e-15);
        assert!(r.valid);
        let r = a_priori_alpha(2.0, 3, 2).unwrap();
        assert!(!r.valid);
        assert!((r.alpha - (3.0 - 8.0) / 3.0).abs() < 1e-14);
        assert_eq!(r.gamma, Some(2.0));
        assert_eq!(r.n0, Some(2));
    }

    #[test]
    fn a_priori_large_exponent_is_stable() {
        let r = a_priori_alpha(3.0, 2000, 2).unwrap();
        assert!(r.valid && (r.alpha - 1.0).abs() < 1e-12);
        let r = a_priori_alpha(1e6, 4, 2).unwrap();
        assert!(!r.valid && r.alpha.is_finite());
    }

    #[test]
    fn a_priori_preconditions() {
        assert!(a_priori_alpha(1.0, 3, 1).is_err());
        assert!(a_priori_alpha(1.0, 2, 3).is_err());
        assert!(a_priori_alpha(-1.0, 3, 2).is_err());
    }

    #[test]
    fn gamma_bar_inverts_example() {
        let g = gamma_bar(0.875, 5, 2).unwrap();
        assert!((g - 1.0).abs() < 1e-8, "{g}");
        // γ̄ shrinks to 0 as alpha_bar approaches 1
        let near_one: Vec<f64> = [0.99, 0.9999, 1.0 - 1e-10, 1.0 - 1e-15]
            .iter()
            .map(|&a| gamma_bar(a, 5, 2).unwrap())
            .collect();
        assert!(near_one.windows(2).all(|w| w[1] < w[0]), "{near_one:?}");
        assert!(near_one[3] < 2e-3);
        assert!(gamma_bar(1.5, 5, 2).is_err());
    }
}
