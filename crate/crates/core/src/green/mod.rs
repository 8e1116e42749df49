//! Lattice Green function of the symmetrised walk, the return probability,
//! and the constants of the local limit theorem.

pub mod local;
pub mod quadrature;
pub mod table;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

pub use local::LocalTransitionTable;
pub use quadrature::QuadratureSpec;
pub use table::GreenTable;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::estimate::MomentEstimate;
use crate::par::{mc_mean, DEFAULT_TASK_SIZE};
use crate::lattice_rw::{check_dim, LatticePoint};
use crate::scalar::Scalar;

/// `G(x)`, the expected number of meetings of two independent walks started
/// at `0` and `x`. Zero at odd-parity sites.
pub fn green_fourier(x: &LatticePoint, spec: &QuadratureSpec) -> Result<f64> {
    if !x.is_even() {
        return Ok(0.0);
    }
    quadrature::green_even(x.coords(), spec)
}

/// `pi_d = 1 - 1 / G(0)`.
pub fn return_probability(d: usize, spec: &QuadratureSpec) -> Result<f64> {
    let g0 = green_fourier(&LatticePoint::origin(d)?, spec)?;
    Ok(1.0 - 1.0 / g0)
}

/// Local limit constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenConstants<T> {
    /// `G(x) ~ K_d / |x|^{d-2}`: `K_d = d Gamma(d/2) / ((d-2) pi^{d/2})`.
    pub k_d: T,
    /// `E|Z|^{-(d-2)}` for `Z ~ N(0, (2/d) I)`: `(d/4)^{(d-2)/2} / Gamma(d/2)`.
    pub z_d: T,
    /// `n^{d/2} P(S_{2n} = 0) -> C_d = 2 (d / (4 pi))^{d/2}`.
    pub c_d: T,
}

pub fn constants<T: Scalar>(d: usize) -> Result<GreenConstants<T>> {
    check_dim(d)?;
    let df = d as f64;
    let pi = std::f64::consts::PI;
    let g = gamma(df / 2.0);
    Ok(GreenConstants {
        k_d: T::lit(df * g / ((df - 2.0) * pi.powf(df / 2.0))),
        z_d: T::lit((df / 4.0).powf((df - 2.0) / 2.0) / g),
        c_d: T::lit(2.0 * (df / (4.0 * pi)).powf(df / 2.0)),
    })
}

/// Monte Carlo estimate of `E|Z|^{-(d-2)}` for `Z ~ N(0, (2/d) I)`.
pub fn z_d_mc(d: usize, samples: u64, seed: u64) -> Result<MomentEstimate> {
    check_dim(d)?;
    let sd = (2.0 / d as f64).sqrt();
    let acc = mc_mean(seed, samples, DEFAULT_TASK_SIZE, |rng| {
        let r2: f64 = (0..d)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (sd * z).powi(2)
            })
            .sum();
        r2.powf(-(d as f64 - 2.0) / 2.0)
    });
    Ok(MomentEstimate::from_accumulator(&acc, seed))
}

/// One row of [`green_asymptotic_residual`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub x: LatticePoint,
    pub norm: f64,
    pub green: f64,
    pub asymptotic: f64,
    /// `|x|^{d-2} G(x) - K_d`.
    pub residual: f64,
    /// `|x|^2 (|x|^{d-2} G(x) - K_d)`, bounded if the correction is
    /// `O(|x|^{-d})`.
    pub scaled_residual: f64,
}

/// Deviation of `G` from its leading asymptotic on a grid of even points.
pub fn green_asymptotic_residual(points: &[LatticePoint], spec: &QuadratureSpec) -> Result<Vec<ResidualRow>> {
    use rayon::prelude::*;
    points
        .par_iter()
        .filter(|x| x.is_even() && x.norm2() > 0)
        .map(|x| {
            let d = x.dim();
            let k = constants::<f64>(d)?.k_d;
            let g = green_fourier(x, spec)?;
            let r = x.norm();
            let residual = r.powi(d as i32 - 2) * g - k;
            Ok(ResidualRow {
                x: *x,
                norm: r,
                green: g,
                asymptotic: k / r.powi(d as i32 - 2),
                residual,
                scaled_residual: r * r * residual,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_constants_in_three_dimensions() {
        let c = constants::<f64>(3).unwrap();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(c.k_d, 3.0 / (2.0 * pi), max_relative = 1e-14);
        assert_relative_eq!(c.z_d, (3.0 / pi).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.c_d, 2.0 * (3.0 / (4.0 * pi)).powf(1.5), max_relative = 1e-14);
        assert_relative_eq!(c.c_d, 0.233_290_5, epsilon = 1e-7);
    }

    #[test]
    fn gaussian_inverse_moment_oracle() {
        let c = constants::<f64>(3).unwrap();
        let e = z_d_mc(3, 400_000, 5).unwrap();
        assert!((e.value - c.z_d).abs() < 4.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn odd_sites_vanish_and_symmetry_holds() {
        let spec = QuadratureSpec::default();
        let odd = LatticePoint::new(&[1, 0, 0]).unwrap();
        assert_eq!(green_fourier(&odd, &spec).unwrap(), 0.0);
        let a = green_fourier(&LatticePoint::new(&[2, 0, 0]).unwrap(), &spec).unwrap();
        let b = green_fourier(&LatticePoint::new(&[0, 2, 0]).unwrap(), &spec).unwrap();
        let c = green_fourier(&LatticePoint::new(&[0, 0, -2]).unwrap(), &spec).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn return_probability_three_dimensions() {
        let pi = return_probability(3, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(pi, 0.340_537_33, epsilon = 1e-8);
    }
}
