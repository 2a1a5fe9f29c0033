//! Control systems `x(i+1) = f(x(i), u(i))` with a nonnegative stage cost.
//!
//! Two kinds are supported: explicit discrete maps, and sampled-data systems
//! obtained by integrating an ODE over one sampling period with the control
//! held constant. For the latter the stage cost is the integral of a running
//! cost, carried as an extra state coordinate so that a single error
//! controller governs both.

mod dopri;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`; infinite endpoints mean unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const FREE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    /// Distance from `v` to the interval.
    pub fn violation(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// An explicit map `x⁺ = f(x, u)` with stage cost `l(x, u)`.
pub trait DiscreteDynamics: Send + Sync {
    fn next_state(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()>;
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64;
}

/// A continuous-time vector field with a running cost.
pub trait ContinuousDynamics: Send + Sync {
    fn derivative(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()>;
    fn cost_rate(&self, x: &[f64], u: &[f64]) -> f64;
}

/// A continuous-time system sampled with zero-order hold.
#[derive(Clone)]
pub struct SampledOde {
    pub dynamics: Arc<dyn ContinuousDynamics>,
    pub sampling_period: f64,
    pub integrator_tolerance: f64,
}

impl SampledOde {
    pub fn new(
        dynamics: Arc<dyn ContinuousDynamics>,
        sampling_period: f64,
        integrator_tolerance: f64,
    ) -> Result<Self> {
        if !(sampling_period > 0.0 && sampling_period.is_finite()) {
            return Err(Error::invalid(format!(
                "sampling period must be positive, got {sampling_period}"
            )));
        }
        if !(integrator_tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "integrator tolerance must be positive, got {integrator_tolerance}"
            )));
        }
        Ok(SampledOde {
            dynamics,
            sampling_period,
            integrator_tolerance,
        })
    }
}

/// Integrates the sampled ODE over one period from `x` with `u` held
/// constant. Returns the successor state and the accumulated running cost.
pub fn integrate_zoh(ode: &SampledOde, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = x.len();
    let mut y = Vec::with_capacity(n + 1);
    y.extend_from_slice(x);
    y.push(0.0);
    let dynamics = &ode.dynamics;
    dopri::integrate(
        |t, y, dy| {
            dynamics
                .derivative(&y[..n], u, &mut dy[..n])
                .map_err(|e| match e {
                    Error::IntegrationFailure { reason, .. } => {
                        Error::IntegrationFailure { time: t, reason }
                    }
                    other => other,
                })?;
            dy[n] = dynamics.cost_rate(&y[..n], u);
            Ok(())
        },
        &mut y,
        ode.sampling_period,
        ode.integrator_tolerance,
    )?;
    let cost = y.pop().unwrap_or(0.0).max(0.0);
    Ok((y, cost))
}

#[derive(Clone)]
pub enum ModelKind {
    ExplicitDiscrete(Arc<dyn DiscreteDynamics>),
    SampledContinuous(SampledOde),
}

/// The system abstraction used throughout the crate. Immutable once built.
#[derive(Clone)]
pub struct SystemModel {
    state_dim: usize,
    control_dim: usize,
    kind: ModelKind,
    state_bounds: Vec<Interval>,
    control_bounds: Vec<Interval>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            ModelKind::ExplicitDiscrete(_) => "explicit-discrete",
            ModelKind::SampledContinuous(_) => "sampled-continuous",
        };
        f.debug_struct("SystemModel")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("kind", &kind)
            .field("state_bounds", &self.state_bounds)
            .field("control_bounds", &self.control_bounds)
            .finish()
    }
}

/// States and stage costs along an open-loop control sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
}

impl SystemModel {
    pub fn new(state_dim: usize, control_dim: usize, kind: ModelKind) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(Error::invalid(
                "state and control dimensions must be at least 1",
            ));
        }
        Ok(SystemModel {
            state_dim,
            control_dim,
            kind,
            state_bounds: vec![Interval::FREE; state_dim],
            control_bounds: vec![Interval::FREE; control_dim],
        })
    }

    pub fn discrete(
        state_dim: usize,
        control_dim: usize,
        dynamics: Arc<dyn DiscreteDynamics>,
    ) -> Result<Self> {
        Self::new(
            state_dim,
            control_dim,
            ModelKind::ExplicitDiscrete(dynamics),
        )
    }

    /// Builds an explicit-discrete model from closures.
    pub fn from_fn<F, L>(state_dim: usize, control_dim: usize, f: F, l: L) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        L: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::discrete(state_dim, control_dim, Arc::new(FnDynamics { f, l }))
    }

    pub fn sampled(state_dim: usize, control_dim: usize, ode: SampledOde) -> Result<Self> {
        Self::new(state_dim, control_dim, ModelKind::SampledContinuous(ode))
    }

    pub fn with_state_bounds(mut self, bounds: Vec<Interval>) -> Result<Self> {
        if bounds.len() != self.state_dim {
            return Err(Error::invalid(format!(
                "expected {} state bounds, got {}",
                self.state_dim,
                bounds.len()
            )));
        }
        self.state_bounds = bounds;
        Ok(self)
    }

    pub fn with_control_bounds(mut self, bounds: Vec<Interval>) -> Result<Self> {
        if bounds.len() != self.control_dim {
            return Err(Error::invalid(format!(
                "expected {} control bounds, got {}",
                self.control_dim,
                bounds.len()
            )));
        }
        self.control_bounds = bounds;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn state_bounds(&self) -> &[Interval] {
        &self.state_bounds
    }

    pub fn control_bounds(&self) -> &[Interval] {
        &self.control_bounds
    }

    /// Sampling period of a sampled-data model, `None` for discrete maps.
    pub fn sampling_period(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::SampledContinuous(ode) => Some(ode.sampling_period),
            ModelKind::ExplicitDiscrete(_) => None,
        }
    }

    /// Successor state and stage cost in one evaluation.
    pub fn transition(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_dims(x, u)?;
        match &self.kind {
            ModelKind::ExplicitDiscrete(d) => {
                let mut next = vec![0.0; self.state_dim];
                d.next_state(x, u, &mut next)?;
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::IntegrationFailure {
                        time: 0.0,
                        reason: "discrete map returned a non-finite state".into(),
                    });
                }
                Ok((next, d.stage_cost(x, u).max(0.0)))
            }
            ModelKind::SampledContinuous(ode) => integrate_zoh(ode, x, u),
        }
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.transition(x, u).map(|(next, _)| next)
    }

    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        self.check_dims(x, u)?;
        match &self.kind {
            ModelKind::ExplicitDiscrete(d) => Ok(d.stage_cost(x, u).max(0.0)),
            ModelKind::SampledContinuous(ode) => integrate_zoh(ode, x, u).map(|(_, c)| c),
        }
    }

    /// States `x0, x1, …, xK` under `controls` of length `K`.
    pub fn rollout(&self, x0: &[f64], controls: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.rollout_with_costs(x0, controls).map(|r| r.states)
    }

    pub fn rollout_with_costs(&self, x0: &[f64], controls: &[Vec<f64>]) -> Result<Rollout> {
        if controls.is_empty() {
            return Err(Error::invalid("rollout needs at least one control"));
        }
        let mut states = Vec::with_capacity(controls.len() + 1);
        let mut stage_costs = Vec::with_capacity(controls.len());
        states.push(x0.to_vec());
        for (index, u) in controls.iter().enumerate() {
            let (next, cost) = self
                .transition(&states[index], u)
                .map_err(|e| Error::Rollout {
                    index,
                    source: Box::new(e),
                })?;
            states.push(next);
            stage_costs.push(cost);
        }
        Ok(Rollout {
            states,
            stage_costs,
        })
    }

    /// Projects a control onto the control box.
    pub fn project_control(&self, u: &mut [f64]) {
        for (v, b) in u.iter_mut().zip(&self.control_bounds) {
            *v = b.clamp(*v);
        }
    }

    pub fn control_feasible(&self, u: &[f64]) -> bool {
        u.len() == self.control_dim
            && u.iter()
                .zip(&self.control_bounds)
                .all(|(v, b)| b.contains(*v))
    }

    /// Squared distance of `x` to the state box.
    pub fn state_violation_sq(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.state_bounds)
            .map(|(v, b)| b.violation(*v).powi(2))
            .sum()
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim || u.len() != self.control_dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: state {} (expected {}), control {} (expected {})",
                x.len(),
                self.state_dim,
                u.len(),
                self.control_dim
            )));
        }
        if x.iter().chain(u).any(|v| !v.is_finite()) {
            return Err(Error::invalid("state or control is not finite"));
        }
        Ok(())
    }
}

struct FnDynamics<F, L> {
    f: F,
    l: L,
}

impl<F, L> DiscreteDynamics for FnDynamics<F, L>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
    L: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    fn next_state(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, u, out);
        Ok(())
    }

    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.l)(x, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrator() -> SystemModel {
        SystemModel::from_fn(
            1,
            1,
            |x, u, out| out[0] = x[0] + u[0],
            |x, u| x[0] * x[0] + u[0] * u[0],
        )
        .unwrap()
    }

    struct Drift {
        cost: bool,
    }

    impl ContinuousDynamics for Drift {
        fn derivative(&self, _x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
            dx[0] = u[0];
            Ok(())
        }
        fn cost_rate(&self, x: &[f64], _u: &[f64]) -> f64 {
            if self.cost {
                x[0] * x[0]
            } else {
                0.0
            }
        }
    }

    fn drift(cost: bool) -> SampledOde {
        SampledOde::new(Arc::new(Drift { cost }), 0.2, 1e-9).unwrap()
    }

    #[test]
    fn zoh_equilibrium() {
        let (x, c) = integrate_zoh(&drift(true), &[0.0], &[0.0]).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn zoh_linear_drift_is_exact() {
        let (x, c) = integrate_zoh(&drift(false), &[1.0], &[-0.5]).unwrap();
        assert!((x[0] - 0.9).abs() < 1e-14);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn zoh_cost_is_integral_of_square() {
        // x(t) = 1 - 0.5 t, ∫₀^0.2 x² dt = [-(1-0.5t)³/1.5]₀^0.2
        let (_, c) = integrate_zoh(&drift(true), &[1.0], &[-0.5]).unwrap();
        let exact = (1.0 - 0.9f64.powi(3)) / 1.5;
        assert!((c - exact).abs() < 1e-12);
    }

    #[test]
    fn discrete_step_and_rollout() {
        let m = integrator();
        assert_eq!(m.step(&[1.0], &[-0.5]).unwrap(), vec![0.5]);
        assert_eq!(m.step(&[0.0], &[0.0]).unwrap(), vec![0.0]);
        let traj = m.rollout(&[1.0], &[vec![-0.5], vec![-0.5]]).unwrap();
        assert_eq!(traj, vec![vec![1.0], vec![0.5], vec![0.0]]);
        let traj = m.rollout(&[0.0], &vec![vec![0.0]; 3]).unwrap();
        assert_eq!(traj, vec![vec![0.0]; 4]);
    }

    #[test]
    fn rollout_reports_failing_index() {
        struct Blowup;
        impl DiscreteDynamics for Blowup {
            fn next_state(&self, x: &[f64], _u: &[f64], out: &mut [f64]) -> Result<()> {
                if x[0] > 2.0 {
                    return Err(Error::IntegrationFailure {
                        time: 0.0,
                        reason: "out of domain".into(),
                    });
                }
                out[0] = x[0] + 1.0;
                Ok(())
            }
            fn stage_cost(&self, _x: &[f64], _u: &[f64]) -> f64 {
                0.0
            }
        }
        let m = SystemModel::discrete(1, 1, Arc::new(Blowup)).unwrap();
        let err = m.rollout(&[0.0], &vec![vec![0.0]; 5]).unwrap_err();
        match err {
            Error::Rollout { index, .. } => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_rollout_rejected() {
        assert!(integrator().rollout(&[0.0], &[]).is_err());
    }

    #[test]
    fn invalid_intervals_rejected() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert!(Interval::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn bounds_length_checked() {
        assert!(integrator().with_control_bounds(vec![]).is_err());
        let m = integrator()
            .with_state_bounds(vec![Interval::new(-1.0, 1.0).unwrap()])
            .unwrap();
        assert_eq!(m.state_violation_sq(&[3.0]), 4.0);
        assert_eq!(m.state_violation_sq(&[0.5]), 0.0);
    }
}
