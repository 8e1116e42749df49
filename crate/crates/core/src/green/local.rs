//! Transition probabilities of the simple random walk near the origin,
//! from the Fourier integral localised at the two peaks of the
//! characteristic function.
//!
//! For even `z` and `m = 2t` steps,
//! `P(S_m = z) = 2 pi^{-d} \int_{[0,L]^d} phi(k)^m prod_i cos(k_i z_i) dk`,
//! where `phi(k) = d^{-1} sum_i cos k_i`. The peaks at `0` and at
//! `(pi, ..., pi)` contribute equally; the rest of the torus carries weight
//! below `(2/3)^m` when `L = pi/2`, and far less for the Gaussian cutoff.

use super::quadrature::gauss_legendre_unit;
use crate::error::{Error, Result};
use crate::lattice_rw::check_dim;

/// Upper bound on quadrature grid cells.
pub const MAX_GRID_CELLS: usize = 1 << 25;

const PANEL_NODES: usize = 16;

/// `P(S_{2t} = z)` for `z` in `[0, r0]^d` (nonnegative representatives).
#[derive(Clone, Debug)]
pub struct LocalTransitionTable {
    pub dim: usize,
    pub t: usize,
    pub r0: usize,
    values: Vec<f64>,
}

impl LocalTransitionTable {
    /// `panels` Gauss-Legendre panels of 16 nodes per axis.
    pub fn build(d: usize, t: usize, r0: usize, panels: usize) -> Result<Self> {
        check_dim(d)?;
        if t == 0 || panels == 0 {
            return Err(Error::Domain("local transition table needs t >= 1 and panels >= 1".into()));
        }
        let q = panels * PANEL_NODES;
        let cells = q.checked_pow(d as u32).filter(|&c| c <= MAX_GRID_CELLS).ok_or_else(|| Error::Budget {
            what: "Fourier transition grid".into(),
            needed: format!("{q}^{d} cells"),
            limit: format!("{MAX_GRID_CELLS} cells"),
        })?;
        let m = 2.0 * t as f64;
        let half_pi = std::f64::consts::FRAC_PI_2;
        let cutoff = half_pi.min((40.0 * d as f64 / t as f64).sqrt());
        let (un, uw) = gauss_legendre_unit(PANEL_NODES);
        let h = cutoff / panels as f64;
        let mut nodes = Vec::with_capacity(q);
        let mut weights = Vec::with_capacity(q);
        for p in 0..panels {
            for (x, w) in un.iter().zip(&uw) {
                nodes.push(h * (p as f64 + x));
                weights.push(h * w);
            }
        }
        let cosk: Vec<f64> = nodes.iter().map(|k| k.cos()).collect();
        let mut grid = vec![0.0; cells];
        for (idx, g) in grid.iter_mut().enumerate() {
            let (mut r, mut phi, mut w) = (idx, 0.0, 1.0);
            for _ in 0..d {
                let i = r % q;
                r /= q;
                phi += cosk[i];
                w *= weights[i];
            }
            phi /= d as f64;
            *g = if phi > 0.0 { w * (m * phi.ln()).exp() } else { 0.0 };
        }
        // contract one axis at a time: axis length q -> r0 + 1
        let side = r0 + 1;
        let basis: Vec<f64> = (0..side)
            .flat_map(|z| nodes.iter().map(move |k| (k * z as f64).cos()))
            .collect();
        let mut shape = vec![q; d];
        for axis in 0..d {
            let inner: usize = shape[..axis].iter().product();
            let outer: usize = shape[axis + 1..].iter().product();
            let mut next = vec![0.0; inner * side * outer];
            for o in 0..outer {
                for z in 0..side {
                    let row = &basis[z * q..(z + 1) * q];
                    let dst = (o * side + z) * inner;
                    for (i, c) in row.iter().enumerate() {
                        let src = (o * q + i) * inner;
                        for j in 0..inner {
                            next[dst + j] += c * grid[src + j];
                        }
                    }
                }
            }
            grid = next;
            shape[axis] = side;
        }
        let norm = 2.0 / std::f64::consts::PI.powi(d as i32);
        let mut values = grid;
        for (idx, v) in values.iter_mut().enumerate() {
            let (mut r, mut l1) = (idx, 0);
            for _ in 0..d {
                l1 += r % side;
                r /= side;
            }
            *v = if l1 % 2 == 0 { norm * *v } else { 0.0 };
        }
        Ok(Self { dim: d, t, r0, values })
    }

    /// Default resolution: three panels per axis.
    pub fn new(d: usize, t: usize, r0: usize) -> Result<Self> {
        Self::build(d, t, r0, 3)
    }

    /// `P(S_{2t} = z)` for `|z|_inf <= r0`.
    pub fn get(&self, z: &[i32]) -> Option<f64> {
        debug_assert_eq!(z.len(), self.dim);
        let side = self.r0 + 1;
        let mut idx = 0;
        for &c in z.iter().rev() {
            let a = c.unsigned_abs() as usize;
            if a > self.r0 {
                return None;
            }
            idx = idx * side + a;
        }
        Some(self.values[idx])
    }

    /// Visits each even site of the cube `|z|_inf <= r0` once through its
    /// nonnegative representative, with the number of sign images.
    pub fn for_each<F: FnMut(&[i32], f64, u32)>(&self, mut f: F) {
        let side = self.r0 + 1;
        let mut z = vec![0i32; self.dim];
        for (idx, &p) in self.values.iter().enumerate() {
            let mut r = idx;
            let mut images = 1;
            for c in z.iter_mut() {
                *c = (r % side) as i32;
                r /= side;
                if *c != 0 {
                    images *= 2;
                }
            }
            if z.iter().map(|c| c.abs()).sum::<i32>() % 2 == 0 {
                f(&z, p, images);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_rw::{return_series, transition_series, SrwLaw};
    use approx::assert_relative_eq;

    #[test]
    fn matches_exact_walk_law() {
        let t = 20;
        let table = LocalTransitionTable::new(3, t, 6).unwrap();
        let law = SrwLaw::new(3, 2 * t, 1 << 24).unwrap();
        let mut max_rel: f64 = 0.0;
        table.for_each(|z, p, _| {
            let exact = law.prob(z);
            max_rel = max_rel.max((p - exact).abs() / exact);
        });
        // the neglected part of the torus is of order (2/3)^{2t} / P(S_{2t} = z)
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
        assert_eq!(table.get(&[1, 0, 0]), Some(0.0));
        assert_eq!(table.get(&[7, 0, 0]), None);
    }

    #[test]
    fn large_horizon_matches_series() {
        for t in [100, 1000, 10_000] {
            let r0 = ((t as f64).sqrt() / 2.0).ceil() as usize;
            let table = LocalTransitionTable::new(3, t, r0).unwrap();
            let u = return_series(3, t).unwrap();
            assert_relative_eq!(table.get(&[0, 0, 0]).unwrap(), u[t], max_relative = 1e-8);
            let x = [r0 as i32, 2, -(r0 as i32 % 2)];
            let ux = transition_series(&x, t).unwrap();
            assert_relative_eq!(table.get(&x).unwrap(), ux[t], max_relative = 1e-8);
        }
    }
}
