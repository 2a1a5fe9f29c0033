use adaptive_mpc::bench::{
    crane_model, CraneModel, CRANE_ODE_TOLERANCE, CRANE_REST_STATE, CRANE_SAMPLING_PERIOD,
};
use adaptive_mpc::model::ContinuousDynamics;

#[test]
fn rest_point_is_fixed() {
    let m = crane_model();
    let mut x = CRANE_REST_STATE.to_vec();
    for _ in 0..10 {
        let (next, l) = m.transition(&x, &[0.0, 0.0]).unwrap();
        assert!(l.abs() < 1e-9);
        x = next;
    }
    for (a, b) in x.iter().zip(&CRANE_REST_STATE) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn small_swing_follows_linearized_pendulum() {
    let crane = CraneModel::default();
    let m = crane_model();
    let (ups, phi0, dphi0) = (2.5, 1e-3, 0.0);
    let omega = (crane.gravity / ups - crane.damping.powi(2) / 4.0).sqrt();
    let d = crane.damping;
    let linear = |t: f64| {
        (-d * t / 2.0).exp()
            * (phi0 * (omega * t).cos() + (dphi0 + d * phi0 / 2.0) / omega * (omega * t).sin())
    };
    let mut x = vec![3.0, 0.0, ups, 0.0, phi0, dphi0];
    for k in 1..=40 {
        x = m.step(&x, &[0.0, 0.0]).unwrap();
        let t = k as f64 * CRANE_SAMPLING_PERIOD;
        assert!(
            (x[4] - linear(t)).abs() < 1e-4 * phi0,
            "t = {t}: {} vs {}",
            x[4],
            linear(t)
        );
    }
}

fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    assert!(n.is_multiple_of(2));
    let inner: f64 = (1..n)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * values[i])
        .sum();
    h / 3.0 * (values[0] + inner + values[n])
}

#[test]
fn stage_cost_is_the_integrated_running_cost() {
    let crane = CraneModel::default();
    let m = crane_model();
    let parts = 64;
    let fine = crane
        .system_model(CRANE_SAMPLING_PERIOD / parts as f64, CRANE_ODE_TOLERANCE)
        .unwrap();
    for (x0, u) in [
        (vec![-3.0, 0.0, 5.0, 0.0, 0.0, 0.0], [1.0, -0.5]),
        (vec![0.0, 1.0, 3.0, -0.5, 0.3, -0.2], [-2.0, 1.0]),
    ] {
        let (_, l) = m.transition(&x0, &u).unwrap();
        let mut x = x0.clone();
        let mut rates = vec![crane.cost_rate(&x, &u)];
        for _ in 0..parts {
            x = fine.step(&x, &u).unwrap();
            rates.push(crane.cost_rate(&x, &u));
        }
        let s = simpson(&rates, CRANE_SAMPLING_PERIOD / parts as f64);
        assert!((s - l).abs() < 1e-7 * (1.0 + l), "{s} vs {l}");
    }
}

#[test]
fn uncontrolled_swing_loses_energy() {
    let crane = CraneModel::default();
    let m = crane_model();
    let mut x = vec![0.0, 0.0, 2.0, 0.0, 0.6, 0.0];
    let mut e = crane.pendulum_energy(&x);
    assert!(e > 0.0);
    for _ in 0..50 {
        x = m.step(&x, &[0.0, 0.0]).unwrap();
        let next = crane.pendulum_energy(&x);
        assert!(next <= e + 1e-12, "{next} > {e}");
        e = next;
    }
}

#[test]
fn crane_stage_cost_is_positive_away_from_rest() {
    let m = crane_model();
    let (_, l) = m
        .transition(&[-3.0, 0.0, 5.0, 0.0, 0.0, 0.0], &[0.0, 0.0])
        .unwrap();
    assert!(l > 0.0);
}
