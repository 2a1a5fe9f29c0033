use adaptive_mpc::bench::{dp_enumerate, grid_projected_solve, FiniteControlSystem};
use adaptive_mpc::error::Error;
use adaptive_mpc::ocp::{self, OcpInstance, SolverOptions};
use proptest::prelude::*;

/// Rounding each control by at most `q/2` raises the cost of an interior
/// minimizer by at most `½·λ̄·N·(q/2)²`, where `λ̄ = 2(1 + N(N+1)/2)` bounds
/// the Hessian of the scalar `x⁺ = x + u`, `l = x² + u²` problem.
fn quantization_slack(n: usize, spacing: f64) -> f64 {
    let nf = n as f64;
    let lambda = 2.0 * (1.0 + nf * (nf + 1.0) / 2.0);
    0.5 * lambda * nf * (spacing / 2.0).powi(2)
}

#[test]
fn enumeration_agrees_with_brute_force() {
    let sys = FiniteControlSystem::scalar_grid(-1.0, 1.0, 5).unwrap();
    let controls = sys.controls().to_vec();
    for n in 1..=4 {
        let mut best = f64::INFINITY;
        for code in 0..controls.len().pow(n as u32) {
            let mut c = code;
            let seq: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let u = controls[c % controls.len()].clone();
                    c /= controls.len();
                    u
                })
                .collect();
            let r = sys.model().rollout_with_costs(&[0.8], &seq).unwrap();
            best = best.min(r.stage_costs.iter().sum());
        }
        let (v, _) = dp_enumerate(&sys, &[0.8], n).unwrap();
        assert_eq!(v, best);
    }
}

#[test]
fn enumeration_cap() {
    let sys = FiniteControlSystem::scalar_grid(-1.0, 1.0, 11).unwrap();
    assert!(matches!(
        dp_enumerate(&sys, &[1.0], 6),
        Err(Error::EnumerationTooLarge { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn enumeration_brackets_continuous_solver(
        x0 in -1.5f64..1.5,
        n in 1usize..=5,
        points in prop::sample::select(vec![3usize, 5, 9]),
    ) {
        let sys = FiniteControlSystem::scalar_grid(-1.0, 1.0, points).unwrap();
        let options = SolverOptions::default();
        let (dp, seq) = dp_enumerate(&sys, &[x0], n).unwrap();
        let r = sys.model().rollout_with_costs(&[x0], &seq).unwrap();
        prop_assert_eq!(r.stage_costs.iter().sum::<f64>(), dp);

        let continuous = ocp::value(&OcpInstance::new(sys.model(), &[x0], n), &options).unwrap();
        prop_assert!(continuous <= dp + 1e-8 * (1.0 + dp));

        let (projected, _) = grid_projected_solve(&sys, &[x0], n, &options).unwrap();
        prop_assert!(dp <= projected + 1e-12);
        let spacing = 2.0 / (points - 1) as f64;
        prop_assert!(projected - dp <= quantization_slack(n, spacing) + 1e-6,
            "projected {projected}, dp {dp}");
    }
}
