//! Fourier quadrature for the lattice Green function.
//!
//! With `X = max |x_i|` on axis `j`, the `k_j` integral is done in closed
//! form:
//!
//! `int cos(k X) / (a - cos k) dk / 2pi = rho^X / sqrt(a^2 - 1)`, with
//! `rho = a - sqrt(a^2 - 1)` and `a = d - sum_{i != j} cos k_i`.
//!
//! The remaining `(d-1)`-dimensional integrand has a `1/|k|` singularity at
//! the origin, removed by splitting `[0, pi]^{d-1}` into pyramids around each
//! coordinate axis and substituting `k_p = pi u`, `k_i = pi u v_i`. The
//! result is analytic on the unit cube and integrated with product
//! Gauss-Legendre rules, geometrically graded in `u` to resolve the
//! `rho^X` decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution control for [`crate::green::green_fourier`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Relative agreement required between successive refinements.
    pub rel_tol: f64,
    /// Gauss-Legendre nodes per panel at the coarsest level.
    pub initial_nodes: usize,
    /// Upper bound on nodes per panel.
    pub max_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            initial_nodes: 8,
            max_nodes: 128,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || self.initial_nodes < 2 || self.max_nodes < self.initial_nodes {
            return Err(Error::Config(format!("invalid quadrature specification {self:?}")));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Composite rule: Gauss-Legendre with `q` nodes on each panel.
fn composite(breaks: &[f64], q: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_legendre_unit(q);
    let mut xs = Vec::with_capacity(q * (breaks.len() - 1));
    let mut ws = Vec::with_capacity(xs.capacity());
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for (ti, wi) in t.iter().zip(&w) {
            xs.push(a + (b - a) * ti);
            ws.push((b - a) * wi);
        }
    }
    (xs, ws)
}

/// Panel breakpoints on `[0, 1]`, graded geometrically towards 0 on the
/// decay scale `1 / X`.
fn u_breaks(x_max: i64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut h = 1.0 / (4.0 * (x_max as f64 + 1.0));
    while h < 0.5 {
        b.push(h);
        h *= 2.0;
    }
    b.push(1.0);
    b
}

/// `int_{[0,1]^m} ...` of the pyramid-transformed integrand at one
/// resolution. `other` holds the `|x_i|` off the main axis, `big` the main
/// axis coordinate.
fn integrate(big: i64, other: &[i64], q: usize) -> f64 {
    let m = other.len();
    let pi = std::f64::consts::PI;
    let (us, uw) = composite(&u_breaks(big), q);
    let (vs, vw) = gauss_legendre_unit(q);
    let xf = big as f64;
    let mut total = 0.0;
    let mut idx = vec![0usize; m.saturating_sub(1)];
    let mut k = vec![0.0; m];
    for p in 0..m {
        // iterate over the (m-1)-dimensional v grid
        let inner = q.pow((m - 1) as u32);
        for flat in 0..inner {
            let mut r = flat;
            for slot in idx.iter_mut() {
                *slot = r % q;
                r /= q;
            }
            let mut wv = 1.0;
            for &i in &idx {
                wv *= vw[i];
            }
            for (ui, (&u, &wu)) in us.iter().zip(&uw).enumerate() {
                let _ = ui;
                let mut slot = 0;
                for (c, kc) in k.iter_mut().enumerate() {
                    if c == p {
                        *kc = pi * u;
                    } else {
                        *kc = pi * u * vs[idx[slot]];
                        slot += 1;
                    }
                }
                let mut am1 = 0.0;
                let mut osc = 1.0;
                for (kc, &o) in k.iter().zip(other) {
                    let s = (0.5 * kc).sin();
                    am1 += 2.0 * s * s;
                    if o != 0 {
                        osc *= (kc * o as f64).cos();
                    }
                }
                let s = (am1 * (am1 + 2.0)).sqrt();
                let decay = if big == 0 {
                    1.0
                } else {
                    (-xf * (am1 + s).ln_1p()).exp()
                };
                let jac = pi.powi(m as i32) * u.powi(m as i32 - 1);
                total += wu * wv * jac * osc * decay / s;
            }
        }
    }
    total / pi.powi(m as i32)
}

/// Green function of the simple random walk at an even-parity point.
pub(crate) fn green_even(x: &[i32], spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    let d = x.len();
    let mut abs: Vec<i64> = x.iter().map(|&c| (c as i64).abs()).collect();
    abs.sort_unstable_by(|a, b| b.cmp(a));
    let big = abs[0];
    let other = &abs[1..];
    let mut q = spec.initial_nodes;
    let mut prev = d as f64 * integrate(big, other, q);
    loop {
        let q2 = 2 * q;
        if q2 > spec.max_nodes {
            return Err(Error::Numerical(format!(
                "Green quadrature at {x:?} did not converge: last value {prev:.12e} with {q} nodes per panel"
            )));
        }
        let cur = d as f64 * integrate(big, other, q2);
        if (cur - prev).abs() <= spec.rel_tol * cur.abs() {
            return Ok(cur);
        }
        prev = cur;
        q = q2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(6);
        for k in 0..12 {
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert_relative_eq!(v, 1.0 / (k + 1) as f64, max_relative = 1e-13);
        }
    }

    #[test]
    fn watson_value() {
        let g0 = green_even(&[0, 0, 0], &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(g0, 1.516_386_059_151_978, max_relative = 1e-9);
    }
}
