//! Environment laws, their cumulants, and the deterministic random field
//! `eta(t, x)`.

use serde::{Deserialize, Serialize};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erf, erfc_inv};

use crate::error::{domain, Error, Result};
use crate::rng::{mix64, open_unit, SplitMix64, GOLDEN_GAMMA};
use crate::scalar::Scalar;

/// Distribution of a single environment value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvLaw {
    /// Standard normal.
    GaussianStandard,
    /// Uniform on `{-1, +1}`.
    Rademacher,
    /// `P(eta = 1) = p`, `P(eta = 0) = 1 - p`.
    Bernoulli { p: f64 },
}

impl EnvLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvLaw::Bernoulli { p } if !(p > 0.0 && p < 1.0) => Err(Error::Config(format!(
                "bernoulli parameter must lie in (0, 1), got {p}"
            ))),
            _ => Ok(()),
        }
    }

    /// `ln E[exp(beta * eta)]` in closed form.
    pub fn log_mgf<T: Scalar>(&self, beta: T) -> T {
        match *self {
            EnvLaw::GaussianStandard => beta * beta / T::lit(2.0),
            EnvLaw::Rademacher => {
                // ln cosh b = |b| + ln((1 + e^{-2|b|}) / 2), stable for large |b|
                let b = beta.abs();
                b + ((-(b + b)).exp().ln_1p() - T::LN_2())
            }
            EnvLaw::Bernoulli { p } => {
                let p = T::lit(p);
                (p * beta.exp_m1()).ln_1p()
            }
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            EnvLaw::GaussianStandard => 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2)),
            EnvLaw::Rademacher => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            EnvLaw::Bernoulli { p } => {
                if x < 0.0 {
                    0.0
                } else if x < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
        }
    }

    /// Quantile transform applied to a uniform `u` in (0, 1).
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            EnvLaw::GaussianStandard => -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u),
            EnvLaw::Rademacher => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            EnvLaw::Bernoulli { p } => {
                if u < 1.0 - p {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, EnvLaw::GaussianStandard)
    }
}

/// `lambda(beta)` for a validated law.
pub fn log_mgf<T: Scalar>(law: &EnvLaw, beta: T) -> Result<T> {
    law.validate()?;
    Ok(law.log_mgf(beta))
}

/// Cumulant functions and moment coefficients of the single-site weight
/// `w = exp(beta * eta - lambda(beta))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet<T> {
    pub beta: T,
    /// `lambda(beta)`.
    pub lambda: T,
    /// `lambda(2 beta) - 2 lambda(beta)`.
    pub lambda2: T,
    /// `lambda(m beta) - m lambda(beta)` for `m = 2, 3, 4`.
    pub lambda_m: [T; 3],
    /// `E(w - 1)^2 = e^{lambda2} - 1`.
    pub kappa2: T,
    /// `kappa2^2`.
    pub gamma2: T,
    /// `E(w - 1)^4`.
    pub gamma4: T,
}

impl<T: Scalar> CumulantSet<T> {
    /// `lambda(m beta) - m lambda(beta)` for `m` in `0..=4`.
    pub fn lambda_of(&self, m: usize) -> T {
        match m {
            0 | 1 => T::zero(),
            2..=4 => self.lambda_m[m - 2],
            _ => panic!("lambda_m is tabulated for m <= 4 only"),
        }
    }

    pub fn lambda3(&self) -> T {
        self.lambda_m[1]
    }

    pub fn lambda4(&self) -> T {
        self.lambda_m[2]
    }

    pub fn to_f64(&self) -> CumulantSet<f64> {
        CumulantSet {
            beta: self.beta.to_f64_lossy(),
            lambda: self.lambda.to_f64_lossy(),
            lambda2: self.lambda2.to_f64_lossy(),
            lambda_m: self.lambda_m.map(|v| v.to_f64_lossy()),
            kappa2: self.kappa2.to_f64_lossy(),
            gamma2: self.gamma2.to_f64_lossy(),
            gamma4: self.gamma4.to_f64_lossy(),
        }
    }
}

pub fn cumulants<T: Scalar>(law: &EnvLaw, beta: T) -> Result<CumulantSet<T>> {
    law.validate()?;
    let lam = law.log_mgf(beta);
    let lm = |m: f64| law.log_mgf(beta * T::lit(m)) - T::lit(m) * lam;
    let lambda_m = [lm(2.0), lm(3.0), lm(4.0)];
    let lambda2 = lambda_m[0];
    let kappa2 = lambda2.exp_m1();
    // E(w - 1)^4 = sum_j C(4, j) (-1)^{4-j} e^{lambda_j}; the j = 0, 1 terms
    // contribute 1 - 4 + ... so subtracting the constant part first keeps
    // precision at small beta.
    let e = |j: usize| match j {
        0 | 1 => T::zero(),
        _ => lambda_m[j - 2].exp_m1(),
    };
    let gamma4 = e(4) - T::lit(4.0) * e(3) + T::lit(6.0) * e(2);
    Ok(CumulantSet {
        beta,
        lambda: lam,
        lambda2,
        lambda_m,
        kappa2,
        gamma2: kappa2 * kappa2,
        gamma4,
    })
}

/// Position of `lambda2` relative to the L2 threshold `ln(1 / pi_d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Region {
    pub inside: bool,
    pub margin: f64,
}

pub fn l2_region_check<T: Scalar>(c: &CumulantSet<T>, pi_d: f64) -> Result<L2Region> {
    if !(pi_d > 0.0 && pi_d < 1.0) {
        return domain(format!("return probability must lie in (0, 1), got {pi_d}"));
    }
    let margin = -pi_d.ln() - c.lambda2.to_f64_lossy();
    Ok(L2Region {
        inside: margin > 0.0,
        margin,
    })
}

/// Which time slices collect environment weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianConvention {
    /// Weight collected at the current site, times `0..n`.
    #[default]
    Departure,
    /// Weight collected at the arrival site, times `1..=n`.
    Arrival,
}

/// Largest admissible `|x_i|` after shifting.
pub const COORD_LIMIT: i64 = (1 << 15) - 1;
/// Largest admissible time after shifting.
pub const TIME_LIMIT: u64 = (1 << 48) - 1;
/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 5;

/// A deterministic i.i.d. environment on `N x Z^d`.
///
/// Values are a pure function of `(seed, t + time_shift, x + space_shift)`.
/// Keys are packed with 16 bits per coordinate (offset binary) into a
/// 128-bit word whose high part also carries 48 bits of time; the two halves
/// are folded through two rounds of the SplitMix64 finalizer. This bounds
/// `|x_i| <= 32767` and `t < 2^48`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvFieldSpec {
    pub law: EnvLaw,
    pub beta: f64,
    pub seed: u64,
    #[serde(default)]
    pub hamiltonian_convention: HamiltonianConvention,
    #[serde(default)]
    pub time_shift: u64,
    #[serde(default)]
    pub space_shift: [i32; MAX_DIM],
}

impl EnvFieldSpec {
    pub fn new(law: EnvLaw, beta: f64, seed: u64) -> Self {
        Self {
            law,
            beta,
            seed,
            hamiltonian_convention: HamiltonianConvention::Departure,
            time_shift: 0,
            space_shift: [0; MAX_DIM],
        }
    }

    pub fn with_convention(mut self, convention: HamiltonianConvention) -> Self {
        self.hamiltonian_convention = convention;
        self
    }

    /// The shifted field `eta o theta_{n, x}`: `(t, y) -> eta(t + n, y + x)`.
    pub fn shifted(mut self, n: u64, x: &[i32]) -> Self {
        self.time_shift += n;
        for (s, &xi) in self.space_shift.iter_mut().zip(x) {
            *s += xi;
        }
        self
    }

    pub fn field(&self) -> Result<EnvField> {
        EnvField::new(self)
    }
}

/// Precomputed form of an [`EnvFieldSpec`] for fast evaluation.
#[derive(Clone, Debug)]
pub struct EnvField {
    spec: EnvFieldSpec,
    seed_key: u64,
    lambda: f64,
    /// Weights of the two atoms for discrete laws (`[low, high]`).
    atoms: [f64; 2],
    /// `u` threshold separating the atoms.
    split: f64,
}

#[inline(always)]
fn pack_coord(v: i64) -> u64 {
    (v + (1 << 15)) as u64 & 0xFFFF
}

impl EnvField {
    pub fn new(spec: &EnvFieldSpec) -> Result<Self> {
        spec.law.validate()?;
        if !spec.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite, got {}", spec.beta)));
        }
        let lambda = spec.law.log_mgf(spec.beta);
        let (atoms, split) = match spec.law {
            EnvLaw::GaussianStandard => ([0.0; 2], 0.0),
            EnvLaw::Rademacher => ([(-spec.beta - lambda).exp(), (spec.beta - lambda).exp()], 0.5),
            EnvLaw::Bernoulli { p } => ([(-lambda).exp(), (spec.beta - lambda).exp()], 1.0 - p),
        };
        Ok(Self {
            spec: *spec,
            seed_key: mix64(spec.seed ^ 0x6A09_E667_F3BC_C909),
            lambda,
            atoms,
            split,
        })
    }

    pub fn spec(&self) -> &EnvFieldSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    /// Checks that every point with `|x_i| <= radius` and time `<= horizon`
    /// stays inside the packing bounds after the shift.
    pub fn check_range(&self, dim: usize, radius: i64, horizon: u64) -> Result<()> {
        if dim > MAX_DIM {
            return domain(format!("dimension {dim} exceeds the supported maximum {MAX_DIM}"));
        }
        for &s in &self.spec.space_shift[..dim] {
            if (s as i64).abs() + radius > COORD_LIMIT {
                return domain(format!(
                    "coordinate range {radius} with shift {s} exceeds the packing bound {COORD_LIMIT}"
                ));
            }
        }
        if self.spec.time_shift.saturating_add(horizon) > TIME_LIMIT {
            return domain(format!("time {horizon} exceeds the packing bound {TIME_LIMIT}"));
        }
        Ok(())
    }

    /// Packs a lattice point into the two key words (low, high without time).
    #[inline(always)]
    pub fn pack(&self, x: &[i32]) -> (u64, u64) {
        let mut lo = 0u64;
        let mut hi = 0u64;
        for (i, &xi) in x.iter().enumerate() {
            let c = pack_coord(xi as i64 + self.spec.space_shift[i] as i64);
            if i < 4 {
                lo |= c << (16 * i);
            } else {
                hi |= c;
            }
        }
        (lo, hi)
    }

    /// High key word for time `t` (shift applied), to be or-ed with the
    /// packed high coordinates.
    #[inline(always)]
    pub fn time_word(&self, t: u64) -> u64 {
        (t + self.spec.time_shift) << 16
    }

    #[inline(always)]
    pub fn hash_packed(&self, lo: u64, hi: u64) -> u64 {
        let a = mix64(lo.wrapping_add(self.seed_key));
        mix64(a ^ hi.wrapping_mul(GOLDEN_GAMMA).wrapping_add(0xBB67_AE85_84CA_A73B))
    }

    /// Uniform variate attached to a packed key.
    #[inline(always)]
    pub fn uniform_packed(&self, lo: u64, hi: u64) -> f64 {
        open_unit(self.hash_packed(lo, hi))
    }

    /// `eta` at a packed key.
    ///
    /// Discrete laws threshold the key's uniform; the Gaussian law runs the
    /// ziggurat sampler on a SplitMix64 stream seeded by the key hash, which
    /// is exact in distribution and an order of magnitude cheaper than the
    /// inverse CDF.
    #[inline(always)]
    pub fn value_packed(&self, lo: u64, hi: u64) -> f64 {
        let h = self.hash_packed(lo, hi);
        match self.spec.law {
            EnvLaw::GaussianStandard => SplitMix64::new(h).sample(StandardNormal),
            law => law.quantile(open_unit(h)),
        }
    }

    /// Site weight `exp(beta eta - lambda)` at a packed key.
    #[inline(always)]
    pub fn weight_packed(&self, lo: u64, hi: u64) -> f64 {
        let h = self.hash_packed(lo, hi);
        match self.spec.law {
            EnvLaw::GaussianStandard => {
                let eta: f64 = SplitMix64::new(h).sample(StandardNormal);
                (self.spec.beta * eta - self.lambda).exp()
            }
            _ => {
                if open_unit(h) < self.split {
                    self.atoms[0]
                } else {
                    self.atoms[1]
                }
            }
        }
    }

    /// `eta(t, x)` without bounds checks (debug builds assert the bounds).
    #[inline]
    pub fn value(&self, t: u64, x: &[i32]) -> f64 {
        debug_assert!(self.in_bounds(t, x));
        let (lo, hi) = self.pack(x);
        self.value_packed(lo, hi | self.time_word(t))
    }

    /// `exp(beta eta(t, x) - lambda(beta))`.
    #[inline]
    pub fn weight(&self, t: u64, x: &[i32]) -> f64 {
        debug_assert!(self.in_bounds(t, x));
        let (lo, hi) = self.pack(x);
        self.weight_packed(lo, hi | self.time_word(t))
    }

    fn in_bounds(&self, t: u64, x: &[i32]) -> bool {
        x.len() <= MAX_DIM
            && self.spec.time_shift.saturating_add(t) <= TIME_LIMIT
            && x
                .iter()
                .zip(&self.spec.space_shift)
                .all(|(&xi, &s)| (xi as i64 + s as i64).abs() <= COORD_LIMIT)
    }
}

/// `eta(t, x)` for the given field, with packing bounds enforced.
pub fn env_value(spec: &EnvFieldSpec, t: u64, x: &[i32]) -> Result<f64> {
    let field = EnvField::new(spec)?;
    if !field.in_bounds(t, x) {
        return domain(format!(
            "key (t = {t}, x = {x:?}) outside the packing bounds |x_i| <= {COORD_LIMIT}, t <= {TIME_LIMIT}"
        ));
    }
    Ok(field.value(t, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_forms() {
        assert_relative_eq!(log_mgf(&EnvLaw::GaussianStandard, 0.2).unwrap(), 0.02, epsilon = 1e-15);
        assert_eq!(log_mgf(&EnvLaw::Rademacher, 0.0_f64).unwrap(), 0.0);
        let v: f64 = log_mgf(&EnvLaw::Bernoulli { p: 0.5 }, 1.0).unwrap();
        assert_relative_eq!(v, ((1.0 + std::f64::consts::E) / 2.0).ln(), epsilon = 1e-14);
        assert_relative_eq!(v, 0.620_114_5, epsilon = 1e-6);
        let r: f64 = EnvLaw::Rademacher.log_mgf(0.7);
        assert_relative_eq!(r, 0.7_f64.cosh().ln(), epsilon = 1e-15);
        assert!(log_mgf(&EnvLaw::Bernoulli { p: 1.0 }, 1.0_f64).is_err());
    }

    #[test]
    fn gaussian_cumulants_match_lambda_j() {
        let c = cumulants(&EnvLaw::GaussianStandard, 0.2_f64).unwrap();
        assert_relative_eq!(c.lambda2, 0.04, epsilon = 1e-15);
        assert_relative_eq!(c.lambda3(), 0.12, epsilon = 1e-15);
        assert_relative_eq!(c.lambda4(), 0.24, epsilon = 1e-15);
        let b2: f64 = 0.04;
        let direct = (6.0 * b2).exp() - 4.0 * (3.0 * b2).exp() + 6.0 * b2.exp() - 3.0;
        assert_relative_eq!(c.gamma4, direct, max_relative = 1e-10);
        assert_eq!(c.gamma2, c.kappa2 * c.kappa2);
    }

    #[test]
    fn zero_beta_is_degenerate() {
        for law in [EnvLaw::GaussianStandard, EnvLaw::Rademacher, EnvLaw::Bernoulli { p: 0.3 }] {
            let c = cumulants(&law, 0.0_f64).unwrap();
            assert_eq!(c.lambda2, 0.0);
            assert_eq!(c.kappa2, 0.0);
            assert_eq!(c.gamma2, 0.0);
            assert_eq!(c.gamma4, 0.0);
        }
    }

    #[test]
    fn f32_cumulants_track_f64() {
        let c32 = cumulants(&EnvLaw::Rademacher, 0.3_f32).unwrap();
        let c64 = cumulants(&EnvLaw::Rademacher, 0.3_f64).unwrap();
        assert_relative_eq!(c32.lambda2 as f64, c64.lambda2, max_relative = 1e-5);
    }

    #[test]
    fn l2_region() {
        let c = cumulants(&EnvLaw::GaussianStandard, 0.2_f64).unwrap();
        let r = l2_region_check(&c, 0.340_537_33).unwrap();
        assert!(r.inside);
        assert_relative_eq!(r.margin, 1.0372, epsilon = 1e-4);
        let mut hot = c;
        hot.lambda2 = 2.0;
        assert!(!l2_region_check(&hot, 0.340_537_33).unwrap().inside);
        assert!(l2_region_check(&c, 1.0).is_err());
    }

    #[test]
    fn field_is_pure_and_shift_translates_keys() {
        let spec = EnvFieldSpec::new(EnvLaw::GaussianStandard, 0.2, 99);
        let a = env_value(&spec, 5, &[1, -2, 3]).unwrap();
        let b = env_value(&spec, 5, &[1, -2, 3]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let shifted = spec.shifted(2, &[1, 0, -1]);
        let c = env_value(&shifted, 3, &[0, -2, 4]).unwrap();
        assert_eq!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn packing_bounds_are_enforced() {
        let spec = EnvFieldSpec::new(EnvLaw::Rademacher, 0.2, 1);
        assert!(env_value(&spec, 0, &[32767, 0, 0]).is_ok());
        assert!(env_value(&spec, 0, &[32768, 0, 0]).is_err());
        assert!(env_value(&spec, 0, &[0, -32768, 0]).is_err());
        assert!(env_value(&spec, TIME_LIMIT + 1, &[0, 0, 0]).is_err());
    }

    #[test]
    fn weight_is_exp_of_value() {
        let spec = EnvFieldSpec::new(EnvLaw::GaussianStandard, 0.3, 4);
        let f = spec.field().unwrap();
        let eta = f.value(7, &[2, 1, 0, -1]);
        assert_relative_eq!(f.weight(7, &[2, 1, 0, -1]), (0.3 * eta - 0.045).exp(), max_relative = 1e-14);
        let spec = EnvFieldSpec::new(EnvLaw::Bernoulli { p: 0.25 }, 0.5, 4);
        let f = spec.field().unwrap();
        let eta = f.value(1, &[0, 0, 0]);
        assert_relative_eq!(f.weight(1, &[0, 0, 0]), (0.5 * eta - f.lambda()).exp(), max_relative = 1e-14);
    }
}
