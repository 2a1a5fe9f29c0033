#![allow(dead_code)]

/// Scalar LQ data: `p[m]` is the `m`-stage Riccati coefficient and
/// `gain(m)` the first feedback gain of the `m`-stage problem.
pub struct Scalar {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub p: Vec<f64>,
}

impl Scalar {
    pub fn new(a: f64, b: f64, q: f64, r: f64, n: usize) -> Self {
        let mut p = vec![0.0];
        for m in 0..n {
            let pm = p[m];
            p.push(q + a * a * r * pm / (r + b * b * pm));
        }
        Scalar { a, b, q, r, p }
    }

    pub fn gain(&self, m: usize) -> f64 {
        let pm = self.p[m - 1];
        self.a * self.b * pm / (self.r + self.b * self.b * pm)
    }

    pub fn stage(&self, x: f64, m: usize) -> f64 {
        let k = self.gain(m);
        (self.q + self.r * k * k) * x * x
    }

    pub fn trajectory(&self, x0: f64, n: usize) -> Vec<f64> {
        let mut xs = vec![x0];
        for k in 0..n {
            let x = xs[k];
            xs.push((self.a - self.b * self.gain(n - k)) * x);
        }
        xs
    }

    /// `(V_m(x) − V_m(x⁺)) / l(x, μ_m(x))` for the `m`-stage feedback,
    /// independent of `x`.
    pub fn decrease_ratio(&self, m: usize) -> f64 {
        let k = self.gain(m);
        let c = self.a - self.b * k;
        self.p[m] * (1.0 - c * c) / (self.q + self.r * k * k)
    }
}
