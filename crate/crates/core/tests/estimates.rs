use adaptive_mpc::error::Error;
use adaptive_mpc::estimate::{a_posteriori_alpha, a_priori_alpha, gamma_bar};
use proptest::prelude::*;

#[test]
fn closed_form_values() {
    let r = a_priori_alpha(0.0, 5, 2).unwrap();
    assert_eq!(r.alpha, 1.0);
    assert!(r.valid);
    let r = a_priori_alpha(1.0, 5, 2).unwrap();
    assert!((r.alpha - 0.875).abs() < 1e-15);
    assert!(r.valid);
    let r = a_priori_alpha(2.0, 3, 2).unwrap();
    assert!(!r.valid);
    assert!(r.alpha < 0.0);
}

#[test]
fn gamma_bar_inverts_examples() {
    let g = gamma_bar(0.875, 5, 2).unwrap();
    assert!((g - 1.0).abs() < 1e-8);
    let g = gamma_bar(0.875, 9, 6).unwrap();
    assert!((g - 1.0).abs() < 1e-8);
}

#[test]
fn rejects_bad_arguments() {
    assert!(a_priori_alpha(1.0, 3, 1).is_err());
    assert!(a_priori_alpha(1.0, 2, 3).is_err());
    assert!(a_priori_alpha(-0.1, 4, 2).is_err());
    assert!(gamma_bar(1.0, 4, 2).is_err());
    assert!(gamma_bar(0.0, 4, 2).is_err());
    assert!(matches!(
        a_posteriori_alpha(1.0, 0.5, 1e-6),
        Err(Error::EquilibriumReached { .. })
    ));
}

proptest! {
    #[test]
    fn alpha_decreases_in_gamma(g in 0.0f64..20.0, dg in 1e-3f64..5.0, m in 0usize..15) {
        let a = a_priori_alpha(g, m + 2, 2).unwrap().alpha;
        let b = a_priori_alpha(g + dg, m + 2, 2).unwrap().alpha;
        prop_assert!(b < a);
        prop_assert!(a <= 1.0);
    }

    #[test]
    fn alpha_increases_in_horizon(g in 1e-3f64..20.0, m in 0usize..30) {
        let a = a_priori_alpha(g, m + 2, 2).unwrap().alpha;
        let b = a_priori_alpha(g, m + 3, 2).unwrap().alpha;
        prop_assert!(b >= a);
        if a < 1.0 - 1e-12 {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn validity_matches_sign(g in 0.0f64..20.0, m in 0usize..30) {
        let r = a_priori_alpha(g, m + 2, 2).unwrap();
        prop_assert_eq!(r.valid, r.alpha > 0.0 || g == 0.0);
    }

    #[test]
    fn gamma_bar_round_trip(g in 0.05f64..10.0, m in 0usize..25) {
        let alpha = a_priori_alpha(g, m + 2, 2).unwrap().alpha;
        prop_assume!(alpha > 1e-6 && alpha < 1.0 - 1e-9);
        let back = gamma_bar(alpha, m + 2, 2).unwrap();
        prop_assert!((back - g).abs() <= 1e-8 * (1.0 + g), "{back} vs {g}");
    }

    #[test]
    fn a_posteriori_is_decrease_ratio(v in 0.0f64..100.0, d in -10.0f64..10.0, l in 0.01f64..10.0) {
        let a = a_posteriori_alpha(v + d, v, l).unwrap();
        prop_assert!((a * l - d).abs() <= 1e-12 * (1.0 + v.abs() + d.abs()));
    }
}
