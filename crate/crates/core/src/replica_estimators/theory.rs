use serde::{Deserialize, Serialize};

use crate::env_model::CumulantSet;
use crate::error::{domain, Result};
use crate::green::constants;
use crate::scalar::Scalar;

/// Closed-form limits for given dimension and disorder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants<T> {
    pub dim: usize,
    pub pi_d: T,
    pub lambda2: T,
    /// `Var(W) = (e^{lambda2} - 1) / (1 - pi_d e^{lambda2})`.
    pub var_w: T,
    /// `E W^2 = (1 - pi_d) e^{lambda2} / (1 - pi_d e^{lambda2})`.
    pub e_w2: T,
    /// `K_d Z_d (1 - pi_d)^2 (e^{lambda2} - 1) e^{lambda2} / (1 - pi_d e^{lambda2})^2`.
    pub sigma2: T,
    /// `K_d Z_d (1 - pi_d) Var(W)`.
    pub sigma1_2: T,
}

pub fn theory_constants<T: Scalar>(d: usize, c: &CumulantSet<T>, pi_d: T) -> Result<TheoryConstants<T>> {
    let g = constants::<T>(d)?;
    let one = T::one();
    let e = c.lambda2.exp();
    let denom = one - pi_d * e;
    if !(denom > T::zero()) {
        return domain(format!(
            "outside the L2 region: pi_d e^(lambda2) = {:?} >= 1, second moments diverge",
            pi_d * e
        ));
    }
    let kz = g.k_d * g.z_d;
    let var_w = c.kappa2 / denom;
    let e_w2 = (one - pi_d) * e / denom;
    let sigma2 = kz * (one - pi_d) * (one - pi_d) * c.kappa2 * e / (denom * denom);
    let sigma1_2 = kz * (one - pi_d) * var_w;
    Ok(TheoryConstants {
        dim: d,
        pi_d,
        lambda2: c.lambda2,
        var_w,
        e_w2,
        sigma2,
        sigma1_2,
    })
}

impl<T: Scalar> TheoryConstants<T> {
    /// Asymptotic `||W - W_n||_2^2 ~ sigma2 n^{-(d-2)/2}`.
    pub fn l2_rate(&self, n: usize) -> T {
        self.sigma2 * T::lit(n as f64).powf(-T::lit((self.dim as f64 - 2.0) / 2.0))
    }

    /// Variance of the window statistic in the limit:
    /// `sigma1_2 (1 - R^{-(d-2)/2})`.
    pub fn window_variance(&self, r: usize) -> T {
        self.sigma1_2 * (T::one() - T::lit(r as f64).powf(-T::lit((self.dim as f64 - 2.0) / 2.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::{cumulants, EnvLaw};
    use approx::assert_relative_eq;

    const PI3: f64 = 0.340_537_329_550_999;

    #[test]
    fn three_dimensional_gaussian_values() {
        let c = cumulants(&EnvLaw::GaussianStandard, 0.2_f64).unwrap();
        let t = theory_constants(3, &c, PI3).unwrap();
        assert_relative_eq!(t.e_w2, 1.063_217_1, epsilon = 2e-7);
        assert_relative_eq!(t.var_w, t.e_w2 - 1.0, epsilon = 1e-14);
        assert_relative_eq!(t.sigma2 / t.sigma1_2, t.e_w2, max_relative = 1e-14);
        assert_relative_eq!(t.sigma2, 0.020_681_1, epsilon = 2e-7);
    }

    #[test]
    fn zero_disorder_and_outside_region() {
        let c = cumulants(&EnvLaw::Rademacher, 0.0_f64).unwrap();
        let t = theory_constants(3, &c, PI3).unwrap();
        assert_eq!(t.var_w, 0.0);
        assert_eq!(t.sigma2, 0.0);
        assert_eq!(t.sigma1_2, 0.0);
        assert_eq!(t.e_w2, 1.0);
        let hot = cumulants(&EnvLaw::GaussianStandard, 1.2_f64).unwrap();
        assert!(theory_constants(3, &hot, PI3).is_err());
    }

    #[test]
    fn single_precision_agrees() {
        let c = cumulants(&EnvLaw::GaussianStandard, 0.2_f32).unwrap();
        let t = theory_constants(3, &c, PI3 as f32).unwrap();
        assert_relative_eq!(t.sigma2 as f64, 0.020_681_1, max_relative = 1e-4);
    }
}
