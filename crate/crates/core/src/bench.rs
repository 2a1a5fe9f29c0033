//! Benchmark systems and reference solutions: the container crane, linear
//! quadratic systems with a Riccati recursion, and systems with a finite
//! control set solved by exhaustive search.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ContinuousDynamics, DiscreteDynamics, Interval, SampledOde, SystemModel};
use crate::ocp::{solve, OcpInstance, SolverOptions};

/// `(χ, χ̇, υ, υ̇, φ, φ̇)` at the start of the transport move.
pub const CRANE_INITIAL_STATE: [f64; 6] = [-3.0, 0.0, 5.0, 0.0, 0.0, 0.0];
/// Target position with zero velocities.
pub const CRANE_REST_STATE: [f64; 6] = [3.0, 0.0, 2.0, 0.0, 0.0, 0.0];
pub const CRANE_SAMPLING_PERIOD: f64 = 0.2;
pub const CRANE_ODE_TOLERANCE: f64 = 1e-9;

/// Crab moving along a rail with a pendulum load on a rope of variable
/// length. State `(χ, χ̇, υ, υ̇, φ, φ̇)`: crab position, rope length and
/// deflection angle with their rates. Controls are the crab and rope
/// accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct CraneModel {
    pub gravity: f64,
    pub damping: f64,
    pub weights: [f64; 7],
    pub chi_ref: f64,
    pub upsilon_ref: f64,
}

impl Default for CraneModel {
    fn default() -> Self {
        CraneModel {
            gravity: 9.81,
            damping: 0.1,
            weights: [0.25, 0.5, 40.0, 20.0, 20.0, 20.0, 0.1],
            chi_ref: CRANE_REST_STATE[0],
            upsilon_ref: CRANE_REST_STATE[2],
        }
    }
}

impl ContinuousDynamics for CraneModel {
    fn derivative(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let (upsilon, phi, dphi) = (x[2], x[4], x[5]);
        if !(upsilon > 0.0) {
            return Err(Error::IntegrationFailure {
                time: 0.0,
                reason: format!("rope length {upsilon} is not positive"),
            });
        }
        dx[0] = x[1];
        dx[1] = u[0];
        dx[2] = x[3];
        dx[3] = u[1];
        dx[4] = dphi;
        dx[5] = -self.damping * dphi - self.gravity / upsilon * phi.sin() - u[0] * phi.cos();
        Ok(())
    }

    fn cost_rate(&self, x: &[f64], u: &[f64]) -> f64 {
        let c = &self.weights;
        let (chi, dchi, ups, dups, phi, dphi) = (x[0], x[1], x[2], x[3], x[4], x[5]);
        c[0] * dphi * dphi * ups * ups
            + c[1] * self.gravity * ups * (1.0 - phi.cos())
            + c[2] * (chi - self.chi_ref).powi(2)
            + c[3] * dchi * dchi
            + c[4] * (ups - self.upsilon_ref).powi(2)
            + c[5] * dups * dups
            + c[6] * (u[0] * u[0] + u[1] * u[1])
    }
}

impl CraneModel {
    /// Sampled system with the standard state and control boxes.
    pub fn system_model(&self, sampling_period: f64, tolerance: f64) -> Result<SystemModel> {
        let ode = SampledOde::new(Arc::new(self.clone()), sampling_period, tolerance)?;
        SystemModel::sampled(6, 2, ode)?
            .with_state_bounds(vec![
                Interval::new(-5.0, 5.0)?,
                Interval::new(-5.0, 5.0)?,
                Interval::new(1.0, 4.0)?,
                Interval::new(-1.0, 2.0)?,
                Interval::new(-1.0, 1.0)?,
                Interval::FREE,
            ])?
            .with_control_bounds(vec![Interval::new(-5.0, 5.0)?, Interval::new(-1.0, 2.0)?])
    }

    /// Mechanical energy of the load relative to its hanging position,
    /// per unit mass and ignoring rope-length motion.
    pub fn pendulum_energy(&self, x: &[f64]) -> f64 {
        let (ups, phi, dphi) = (x[2], x[4], x[5]);
        0.5 * ups * ups * dphi * dphi + self.gravity * ups * (1.0 - phi.cos())
    }
}

/// The crane with `T = 0.2` and integrator tolerance `1e-9`.
pub fn crane_model() -> SystemModel {
    CraneModel::default()
        .system_model(CRANE_SAMPLING_PERIOD, CRANE_ODE_TOLERANCE)
        .expect("crane constants are valid")
}

/// Unconstrained `x⁺ = Ax + Bu` with stage cost `x'Qx + u'Ru`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LqSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let (n, m) = (a.nrows(), b.ncols());
        if n == 0 || m == 0 || a.ncols() != n || b.nrows() != n {
            return Err(Error::invalid("A must be n×n and B n×m"));
        }
        if q.shape() != (n, n) || r.shape() != (m, m) {
            return Err(Error::invalid("Q must be n×n and R m×m"));
        }
        if !(q.is_square() && (&q - q.transpose()).amax() < 1e-12) {
            return Err(Error::invalid("Q must be symmetric"));
        }
        if q.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::invalid("Q must be positive semidefinite"));
        }
        if (&r - r.transpose()).amax() > 1e-12 || r.clone().cholesky().is_none() {
            return Err(Error::invalid("R must be symmetric positive definite"));
        }
        Ok(LqSystem { a, b, q, r })
    }

    pub fn scalar(a: f64, b: f64, q: f64, r: f64) -> Result<Self> {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(b), m(q), m(r))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn model(&self) -> SystemModel {
        SystemModel::discrete(self.state_dim(), self.control_dim(), Arc::new(self.clone()))
            .expect("dimensions checked on construction")
    }

    /// `P_1, …, P_n` of the backward recursion.
    pub fn riccati(&self, n: usize) -> Result<Vec<DMatrix<f64>>> {
        if n == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let mut ps = vec![self.q.clone()];
        for stage in 1..n {
            let p = &ps[stage - 1];
            let gain = self.gain(p, stage)?;
            let next = &self.q + self.a.transpose() * p * &self.a
                - self.a.transpose() * p * &self.b * gain;
            ps.push((&next + next.transpose()) * 0.5);
        }
        Ok(ps)
    }

    // (R + B'PB)⁻¹ B'PA
    fn gain(&self, p: &DMatrix<f64>, stage: usize) -> Result<DMatrix<f64>> {
        let s = &self.r + self.b.transpose() * p * &self.b;
        let chol = s.cholesky().ok_or(Error::SingularInnovation { stage })?;
        Ok(chol.solve(&(self.b.transpose() * p * &self.a)))
    }

    /// `V_n(x) = x'P_n x`.
    pub fn riccati_value(&self, n: usize, x: &[f64]) -> Result<f64> {
        let p = self.riccati(n)?.pop().expect("n ≥ 1");
        let x = DVector::from_column_slice(x);
        Ok(x.dot(&(p * &x)))
    }

    /// Optimal open-loop controls for horizon `n` from `x`.
    pub fn optimal_controls(&self, n: usize, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let ps = self.riccati(n)?;
        let mut x = DVector::from_column_slice(x);
        let mut controls = Vec::with_capacity(n);
        for k in 0..n {
            let remaining = n - k;
            let u = if remaining == 1 {
                DVector::zeros(self.control_dim())
            } else {
                -self.gain(&ps[remaining - 2], remaining)? * &x
            };
            x = &self.a * &x + &self.b * &u;
            controls.push(u.as_slice().to_vec());
        }
        Ok(controls)
    }
}

impl DiscreteDynamics for LqSystem {
    fn next_state(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        let next =
            &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u);
        out.copy_from_slice(next.as_slice());
        Ok(())
    }

    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let u = DVector::from_column_slice(u);
        x.dot(&(&self.q * &x)) + u.dot(&(&self.r * &u))
    }
}

/// Largest number of leaves [`dp_enumerate`] will visit.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// An explicit-discrete model restricted to a finite control set.
#[derive(Debug, Clone)]
pub struct FiniteControlSystem {
    model: SystemModel,
    controls: Vec<Vec<f64>>,
}

impl FiniteControlSystem {
    /// The control set is sorted lexicographically; duplicates are removed.
    pub fn new(model: SystemModel, mut controls: Vec<Vec<f64>>) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::invalid("control set must be nonempty"));
        }
        if controls
            .iter()
            .any(|u| u.len() != model.control_dim() || u.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::invalid(
                "control set elements must be finite with the model's control dimension",
            ));
        }
        controls.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        controls.dedup();
        Ok(FiniteControlSystem { model, controls })
    }

    /// Scalar `x⁺ = x + u`, `l = x² + u²` with controls on a uniform grid.
    pub fn scalar_grid(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points < 2 || !(lo < hi) {
            return Err(Error::invalid("grid needs lo < hi and at least two points"));
        }
        let model = SystemModel::from_fn(
            1,
            1,
            |x, u, o| o[0] = x[0] + u[0],
            |x, u| x[0] * x[0] + u[0] * u[0],
        )?
        .with_control_bounds(vec![Interval::new(lo, hi)?])?;
        let step = (hi - lo) / (points - 1) as f64;
        let controls = (0..points).map(|i| vec![lo + step * i as f64]).collect();
        Self::new(model, controls)
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    /// Nearest element of the control set (first one on ties).
    pub fn nearest(&self, u: &[f64]) -> &[f64] {
        let dist = |c: &Vec<f64>| c.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut best = &self.controls[0];
        let mut best_d = dist(best);
        for c in &self.controls[1..] {
            let d = dist(c);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        best
    }
}

/// Exact minimum of the `n`-stage cost over all control sequences from the
/// finite set. Among minimizers the lexicographically smallest sequence is
/// returned.
pub fn dp_enumerate(
    sys: &FiniteControlSystem,
    x0: &[f64],
    n: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if n == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let leaves = (sys.controls.len() as f64).powi(n as i32);
    if leaves > ENUMERATION_CAP as f64 {
        return Err(Error::EnumerationTooLarge {
            leaves,
            cap: ENUMERATION_CAP,
        });
    }
    let mut search = Search {
        sys,
        n,
        best: f64::INFINITY,
        best_seq: Vec::new(),
        path: Vec::with_capacity(n),
    };
    search.visit(x0.to_vec(), 0.0)?;
    let best_seq = search
        .best_seq
        .iter()
        .map(|&i| sys.controls[i].clone())
        .collect();
    Ok((search.best, best_seq))
}

struct Search<'a> {
    sys: &'a FiniteControlSystem,
    n: usize,
    best: f64,
    best_seq: Vec<usize>,
    path: Vec<usize>,
}

impl Search<'_> {
    // Depth first in lexicographic order; a strict improvement is needed to
    // replace the incumbent, and since stage costs are nonnegative any
    // prefix already at the incumbent's cost can be cut.
    fn visit(&mut self, x: Vec<f64>, cost: f64) -> Result<()> {
        if self.path.len() == self.n {
            if cost < self.best {
                self.best = cost;
                self.best_seq = self.path.clone();
            }
            return Ok(());
        }
        for i in 0..self.sys.controls.len() {
            let (next, l) = self.sys.model.transition(&x, &self.sys.controls[i])?;
            let c = cost + l;
            if c >= self.best {
                continue;
            }
            self.path.push(i);
            self.visit(next, c)?;
            self.path.pop();
        }
        Ok(())
    }
}

/// Solves the continuous problem, rounds every control to the nearest grid
/// element and returns the cost of the rounded sequence.
pub fn grid_projected_solve(
    sys: &FiniteControlSystem,
    x0: &[f64],
    n: usize,
    options: &SolverOptions,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let instance = OcpInstance::new(&sys.model, x0, n).with_penalty(options.penalty_weight);
    let continuous = solve(&instance, options)?;
    let rounded: Vec<Vec<f64>> = continuous
        .controls
        .iter()
        .map(|u| sys.nearest(u).to_vec())
        .collect();
    let rollout = sys.model.rollout_with_costs(x0, &rounded)?;
    Ok((rollout.stage_costs.iter().sum(), rounded))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crane_rest_point_is_fixed() {
        let m = crane_model();
        let (next, cost) = m.transition(&CRANE_REST_STATE, &[0.0, 0.0]).unwrap();
        assert_eq!(cost, 0.0);
        for (a, b) in next.iter().zip(&CRANE_REST_STATE) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn crane_rejects_nonpositive_rope() {
        let m = crane_model();
        let err = m
            .step(&[0.0, 0.0, 0.0, 0.0, 0.1, 0.0], &[0.0, 0.0])
            .unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }));
    }

    #[test]
    fn riccati_scalar_values() {
        let lq = LqSystem::scalar(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(lq.riccati_value(1, &[1.0]).unwrap(), 1.0);
        assert!((lq.riccati_value(2, &[1.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!((lq.riccati_value(3, &[1.0]).unwrap() - 1.6).abs() < 1e-15);
        let u = lq.optimal_controls(2, &[1.0]).unwrap();
        assert!((u[0][0] + 0.5).abs() < 1e-15 && u[1][0] == 0.0);
    }

    #[test]
    fn lq_validation() {
        assert!(LqSystem::scalar(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(LqSystem::scalar(1.0, 1.0, -1.0, 1.0).is_err());
        assert!(LqSystem::riccati(&LqSystem::scalar(1.0, 1.0, 1.0, 1.0).unwrap(), 0).is_err());
    }

    #[test]
    fn enumeration_example() {
        let sys = FiniteControlSystem::new(
            FiniteControlSystem::scalar_grid(-1.0, 0.0, 3)
                .unwrap()
                .model()
                .clone(),
            vec![vec![0.0], vec![-1.0], vec![-0.5]],
        )
        .unwrap();
        let (v, seq) = dp_enumerate(&sys, &[1.0], 2).unwrap();
        assert_eq!(v, 1.5);
        assert_eq!(seq, vec![vec![-0.5], vec![0.0]]);
        let (v, seq) = dp_enumerate(&sys, &[0.0], 4).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(seq, vec![vec![0.0]; 4]);
    }

    #[test]
    fn enumeration_ties_prefer_lexicographic_minimum() {
        // l = u² only and x irrelevant: ±1 tie, -1 sorts first
        let m = SystemModel::from_fn(
            1,
            1,
            |x, _u, o| o[0] = x[0],
            |_x, u| (u[0] * u[0] - 1.0).abs(),
        )
        .unwrap();
        let sys = FiniteControlSystem::new(m, vec![vec![1.0], vec![-1.0], vec![0.0]]).unwrap();
        let (v, seq) = dp_enumerate(&sys, &[0.0], 2).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(seq, vec![vec![-1.0], vec![-1.0]]);
    }

    #[test]
    fn enumeration_cap() {
        let sys = FiniteControlSystem::scalar_grid(-1.0, 1.0, 11).unwrap();
        assert!(matches!(
            dp_enumerate(&sys, &[1.0], 6),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }
}
