//! Projected quasi-Newton descent for box-constrained problems.
//!
//! Each iteration restricts a BFGS inverse-Hessian direction to the free
//! variables and runs an Armijo backtracking search along the projection
//! arc. A failed search restarts from projected steepest descent; a failed
//! steepest-descent search ends the run. Both the restart direction and the
//! convergence test depend only on the current point, so re-running from a
//! returned point reproduces the same termination.

/// Objective with a per-point evaluation cache that the gradient can reuse.
pub(crate) trait Objective {
    type Cache;

    /// `None` when the point cannot be evaluated (treated as `+∞`).
    fn eval(&self, x: &[f64]) -> Option<(f64, Self::Cache)>;

    fn gradient(&self, x: &[f64], f: f64, cache: &Self::Cache, g: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug)]
pub(crate) struct Outcome<C> {
    pub x: Vec<f64>,
    pub f: f64,
    pub cache: C,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

pub(crate) fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].max(lo[i]).min(hi[i]);
    }
}

/// Scaled projected-gradient stationarity measure
/// `‖P(x − g) − x‖∞ / (1 + |f|)`.
pub(crate) fn stationarity(x: &[f64], g: &[f64], f: f64, lo: &[f64], hi: &[f64]) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..x.len() {
        let p = (x[i] - g[i]).max(lo[i]).min(hi[i]);
        r = r.max((p - x[i]).abs());
    }
    r / (1.0 + f.abs())
}

/// Returns `None` if the objective cannot be evaluated at the projected
/// starting point.
pub(crate) fn minimize<O: Objective>(
    obj: &O,
    mut x: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    settings: Settings,
) -> Option<Outcome<O::Cache>> {
    let n = x.len();
    project(&mut x, lo, hi);
    let (mut f, mut cache) = obj.eval(&x)?;
    if !f.is_finite() {
        return None;
    }
    let mut g = vec![0.0; n];
    obj.gradient(&x, f, &cache, &mut g);

    let mut h_inv = identity(n);
    let mut fresh = true;
    let mut residual = stationarity(&x, &g, f, lo, hi);
    let mut iterations = 0;
    let mut converged = residual <= settings.tolerance;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut d = if fresh {
            steepest(&g, &free)
        } else {
            let d = newton(&h_inv, &g, &free);
            if dot(&d, &g) < 0.0 {
                d
            } else {
                fresh = true;
                steepest(&g, &free)
            }
        };

        let mut accepted = line_search(obj, &x, f, &g, &d, lo, hi);
        if accepted.is_none() && !fresh {
            fresh = true;
            h_inv = identity(n);
            d = steepest(&g, &free);
            accepted = line_search(obj, &x, f, &g, &d, lo, hi);
        }
        let Some((x_new, f_new, cache_new)) = accepted else {
            break;
        };

        let mut g_new = vec![0.0; n];
        obj.gradient(&x_new, f_new, &cache_new, &mut g_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        // curvature pairs live on the free set so that bound variables do
        // not pollute the reduced inverse Hessian
        let y: Vec<f64> = (0..n)
            .map(|i| if free[i] { g_new[i] - g[i] } else { 0.0 })
            .collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                h_inv = identity(n);
                h_inv.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        x = x_new;
        f = f_new;
        cache = cache_new;
        g = g_new;
        residual = stationarity(&x, &g, f, lo, hi);
        converged = residual <= settings.tolerance;
    }

    Some(Outcome {
        x,
        f,
        cache,
        residual,
        iterations,
        converged,
    })
}

fn line_search<O: Objective>(
    obj: &O,
    x: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> Option<(Vec<f64>, f64, O::Cache)> {
    let mut t = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..MAX_BACKTRACKS {
        for i in 0..x.len() {
            trial[i] = x[i] + t * d[i];
        }
        project(&mut trial, lo, hi);
        let mut slope = 0.0;
        let mut moved = false;
        for i in 0..x.len() {
            let s = trial[i] - x[i];
            moved |= s != 0.0;
            slope += g[i] * s;
        }
        if !moved || slope >= 0.0 {
            return None;
        }
        if let Some((ft, cache)) = obj.eval(&trial) {
            if ft.is_finite() && ft <= f + ARMIJO * slope {
                return Some((trial, ft, cache));
            }
        }
        t *= 0.5;
    }
    None
}

fn steepest(g: &[f64], free: &[bool]) -> Vec<f64> {
    let gmax = g
        .iter()
        .zip(free)
        .filter(|(_, &fr)| fr)
        .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
    let scale = 1.0 / gmax.max(1.0);
    g.iter()
        .zip(free)
        .map(|(v, &fr)| if fr { -scale * v } else { 0.0 })
        .collect()
}

fn newton(h_inv: &[f64], g: &[f64], free: &[bool]) -> Vec<f64> {
    let n = g.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        if !free[i] {
            continue;
        }
        let row = &h_inv[i * n..(i + 1) * n];
        d[i] = -(0..n)
            .filter(|&j| free[j])
            .map(|j| row[j] * g[j])
            .sum::<f64>();
    }
    d
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy = dot(y, &hy);
    let c = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + c * s[i] * s[j];
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
