use adaptive_mpc::adapt::{
    adapt_step, prolong, shorten_apriori, shorten_certified, AdaptationConfig,
};
use adaptive_mpc::bench::LqSystem;
use adaptive_mpc::estimate::{gamma_bar, EstimatorKind};
use adaptive_mpc::ocp::{OcpSolver, SolverOptions};
use proptest::prelude::*;

mod common;
use common::Scalar;

const EQ: f64 = 1e-3;

fn solver(a: f64, b: f64, q: f64, r: f64) -> OcpSolver {
    OcpSolver::new(
        LqSystem::scalar(a, b, q, r).unwrap().model(),
        SolverOptions::default(),
    )
}

#[test]
fn prolongation_reaches_three() {
    let s = solver(1.0, 1.0, 1.0, 1.0);
    let config = AdaptationConfig::default().with_alpha_bar(0.95);
    let from = s.solve(&[1.0], 2, None).unwrap();
    let (n, _, eval) = prolong(&s, &config, &[1.0], 2, &from).unwrap();
    assert_eq!(n, 3);
    assert!((eval.alpha - Scalar::new(1.0, 1.0, 1.0, 1.0, 3).decrease_ratio(3)).abs() < 1e-6);

    let plan = adapt_step(&s, &config, &[1.0], 2, None).unwrap();
    assert_eq!(plan.chosen_horizon, 3);
    assert!(plan.alpha_achieved >= 0.95);
}

/// Largest `k` such that the decrease condition holds on the shortened
/// horizons `N − 1, …, N − k`, or `None` if some ratio is too close to
/// `ᾱ` to decide numerically.
#[allow(clippy::needless_range_loop)]
fn certified_oracle(s: &Scalar, n: usize, x0: f64, alpha_bar: f64, n_min: usize) -> Option<usize> {
    let xs = s.trajectory(x0, n);
    let mut span = 0;
    for k in 1..n.saturating_sub(n_min) {
        let h = n - k;
        let l = s.stage(xs[k], h);
        if (l - EQ).abs() < 1e-3 * EQ {
            return None;
        }
        if l <= EQ {
            break;
        }
        let ratio = s.decrease_ratio(h);
        if (ratio - alpha_bar).abs() < 1e-4 {
            return None;
        }
        if ratio < alpha_bar {
            break;
        }
        span = k;
    }
    Some(span)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn certified_shortening_matches_riccati(
        a in 0.6f64..1.6,
        b in 0.5f64..1.5,
        q in 0.2f64..3.0,
        r in 0.2f64..3.0,
        alpha_bar in 0.3f64..0.99,
        n in 3usize..12,
        x0 in 1.0f64..50.0,
    ) {
        let config = AdaptationConfig::default().with_alpha_bar(alpha_bar);
        let oracle = Scalar::new(a, b, q, r, n);
        let Some(expected) = certified_oracle(&oracle, n, x0, alpha_bar, config.n_min) else {
            return Ok(());
        };
        let s = solver(a, b, q, r);
        let solution = s.solve(&[x0], n, None).unwrap();
        let short = shorten_certified(&s, &config, &solution).unwrap();
        prop_assert_eq!(short.span, expected);
        prop_assert_eq!(short.tail.len(), expected.saturating_sub(1));
        prop_assert_eq!(short.certificates.len(), short.tail.len());
        for (j, c) in short.certificates.iter().enumerate() {
            let k = j + 1;
            let x = solution.trajectory[k][0];
            let v = oracle.p[n - k] * x * x;
            prop_assert!((c.value - v).abs() <= 1e-6 * (1.0 + v));
            prop_assert_eq!(&short.tail[j], &solution.controls[k]);
        }
    }

    #[test]
    fn prolongation_stops_at_first_sufficient_horizon(
        a in 0.6f64..1.6,
        b in 0.5f64..1.5,
        q in 0.2f64..3.0,
        r in 0.2f64..3.0,
        alpha_bar in 0.3f64..0.99,
    ) {
        let config = AdaptationConfig { n_max: 15, ..AdaptationConfig::default().with_alpha_bar(alpha_bar) };
        let oracle = Scalar::new(a, b, q, r, config.n_max);
        let ratios: Vec<f64> = (2..=config.n_max).map(|m| oracle.decrease_ratio(m)).collect();
        prop_assume!(ratios.iter().all(|v| (v - alpha_bar).abs() > 1e-4));
        let expected = ratios.iter().position(|&v| v >= alpha_bar).map(|i| i + 2);
        let s = solver(a, b, q, r);
        let result = adapt_step(&s, &config, &[2.0], 2, None);
        match expected {
            Some(n) => {
                let plan = result.unwrap();
                prop_assert_eq!(plan.chosen_horizon, n);
                prop_assert!(plan.alpha_achieved >= alpha_bar);
            }
            None => prop_assert!(result.is_err()),
        }
    }
}

/// Span of the a priori shortening from closed-form Riccati quantities,
/// for `N̂ = N₀`.
fn apriori_oracle(s: &Scalar, n: usize, x0: f64, config: &AdaptationConfig) -> usize {
    let xs = s.trajectory(x0, n);
    let n0 = config.n0;
    let limit = (n - n0 - 1).min(n - config.n_min);
    let mut span = 0;
    for k in 0..limit {
        let denom = (2..=n0)
            .map(|j| s.stage(xs[n - j], j - 1))
            .fold(0.0, f64::max);
        if denom <= EQ {
            break;
        }
        let mut gamma = (s.p[n0] * xs[n - n0].powi(2) / denom - 1.0).max(0.0);
        for m in n0 + 1..=n - k {
            gamma = gamma.max(s.p[m] / (s.q + s.r * s.gain(m).powi(2)) - 1.0);
        }
        let bar = gamma_bar(config.alpha_bar, n - k, n0).unwrap();
        assert!((gamma - bar).abs() > 1e-4, "undecidable tie");
        if gamma >= bar {
            break;
        }
        span = k;
    }
    span
}

#[test]
fn apriori_shortening_matches_riccati() {
    for &(alpha_bar, expected) in &[(0.9, 4), (0.98, 3)] {
        let config = AdaptationConfig {
            estimator: EstimatorKind::APriori,
            ..AdaptationConfig::default().with_alpha_bar(alpha_bar)
        };
        let oracle = Scalar::new(1.0, 1.0, 1.0, 1.0, 8);
        assert_eq!(apriori_oracle(&oracle, 8, 100.0, &config), expected);
        let s = solver(1.0, 1.0, 1.0, 1.0);
        let solution = s.solve(&[100.0], 8, None).unwrap();
        let short = shorten_apriori(&s, &config, &solution).unwrap();
        assert_eq!(short.span, expected);
        assert_eq!(short.tail, solution.controls[1..expected].to_vec());
    }
    for &(a, b, q, r) in &[(1.3, 0.9, 2.0, 0.7), (0.8, 1.1, 0.5, 1.5)] {
        for alpha_bar in [0.5, 0.7] {
            let config = AdaptationConfig {
                estimator: EstimatorKind::APriori,
                ..AdaptationConfig::default().with_alpha_bar(alpha_bar)
            };
            let oracle = Scalar::new(a, b, q, r, 9);
            let expected = apriori_oracle(&oracle, 9, 1e4, &config);
            assert!(expected > 0);
            let s = solver(a, b, q, r);
            let solution = s.solve(&[1e4], 9, None).unwrap();
            assert_eq!(
                shorten_apriori(&s, &config, &solution).unwrap().span,
                expected
            );
        }
    }
}
