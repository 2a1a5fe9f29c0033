//! Dormand–Prince 5(4) embedded pair with standard step-size control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const MAX_STEPS: usize = 1_000_000;

/// Integrates `y' = rhs(y)` from `0` to `t_end` in place, with absolute and
/// relative tolerance both equal to `tol`.
pub(crate) fn integrate<F>(mut rhs: F, y: &mut [f64], t_end: f64, tol: f64) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut t = 0.0;
    rhs(t, y, &mut k[0])?;
    check_finite(t, &k[0])?;

    let mut h = initial_step(&mut rhs, y, &k[0], t_end, tol, &mut tmp, &mut y_new)?;
    let h_min = t_end * 1e-13;
    let mut last_rejected = false;

    for _ in 0..MAX_STEPS {
        if t >= t_end {
            return Ok(());
        }
        let remaining = t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }

        stage(&mut tmp, y, h, &k, &[A21]);
        rhs(t + C2 * h, &tmp, &mut k[1])?;
        stage(&mut tmp, y, h, &k, &[A31, A32]);
        rhs(t + C3 * h, &tmp, &mut k[2])?;
        stage(&mut tmp, y, h, &k, &[A41, A42, A43]);
        rhs(t + C4 * h, &tmp, &mut k[3])?;
        stage(&mut tmp, y, h, &k, &[A51, A52, A53, A54]);
        rhs(t + C5 * h, &tmp, &mut k[4])?;
        stage(&mut tmp, y, h, &k, &[A61, A62, A63, A64, A65]);
        rhs(t + h, &tmp, &mut k[5])?;
        stage(&mut y_new, y, h, &k, &[A71, 0.0, A73, A74, A75, A76]);
        rhs(t + h, &y_new, &mut k[6])?;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = tol + tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::IntegrationFailure {
                time: t,
                reason: "non-finite error estimate".into(),
            });
        }

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&y_new);
            // first-same-as-last
            let (head, tail) = k.split_at_mut(6);
            head[0].copy_from_slice(&tail[0]);
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            h *= (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            last_rejected = true;
        }
        if h < h_min {
            return Err(Error::IntegrationFailure {
                time: t,
                reason: format!("step size {h:.3e} underflowed the minimum {h_min:.3e}"),
            });
        }
    }
    Err(Error::IntegrationFailure {
        time: t,
        reason: format!("exceeded {MAX_STEPS} steps"),
    })
}

fn stage(out: &mut [f64], y: &[f64], h: f64, k: &[Vec<f64>], a: &[f64]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (j, aj) in a.iter().enumerate() {
            acc += aj * k[j][i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn check_finite(t: f64, dy: &[f64]) -> Result<()> {
    if dy.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationFailure {
            time: t,
            reason: "vector field returned a non-finite value".into(),
        })
    }
}

// Hairer, Nørsett & Wanner starting step heuristic.
fn initial_step<F>(
    rhs: &mut F,
    y0: &[f64],
    f0: &[f64],
    t_end: f64,
    tol: f64,
    y1: &mut [f64],
    f1: &mut [f64],
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len() as f64;
    let sc = |v: f64| tol + tol * v.abs();
    let d0 = (y0.iter().map(|&v| (v / sc(v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y0
        .iter()
        .zip(f0)
        .map(|(&v, &dv)| (dv / sc(v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(t_end);
    for i in 0..y0.len() {
        y1[i] = y0[i] + h0 * f0[i];
    }
    rhs(h0, y1, f1)?;
    check_finite(h0, f1)?;
    let d2 = (y0
        .iter()
        .zip(f0.iter().zip(f1.iter()))
        .map(|(&v, (&a, &b))| ((b - a) / sc(v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let big = d1.max(d2);
    let h1 = if big <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / big).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(t_end))
}
