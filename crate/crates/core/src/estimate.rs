//! Moment estimates with standard errors and a commutative merge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactEnum,
    ClosedForm,
    Mc,
}

/// Running mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Pooled statistics of two disjoint samples. Symmetric in its
    /// arguments, bit for bit.
    pub fn merge(&self, other: &Accumulator) -> Accumulator {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        Accumulator {
            count: self.count + other.count,
            mean: (na * self.mean + nb * other.mean) / n,
            m2: (self.m2 + other.m2) + delta * delta * (na * nb / n),
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// A value with its standard error and provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub count: u64,
    pub method: Method,
    /// Master seed of the Monte Carlo run, if any.
    pub seed: Option<u64>,
}

impl MomentEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            count: 0,
            method: Method::ExactEnum,
            seed: None,
        }
    }

    pub fn closed_form(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            count: 0,
            method: Method::ClosedForm,
            seed: None,
        }
    }

    pub fn from_accumulator(acc: &Accumulator, seed: u64) -> Self {
        Self {
            value: acc.mean,
            stderr: acc.stderr(),
            count: acc.count,
            method: Method::Mc,
            seed: Some(seed),
        }
    }

    /// Recovers the sufficient statistics of a Monte Carlo estimate.
    pub fn to_accumulator(&self) -> Accumulator {
        let n = self.count as f64;
        Accumulator {
            count: self.count,
            mean: self.value,
            m2: self.stderr * self.stderr * n * (n - 1.0),
        }
    }

    /// Count-weighted pooling of two Monte Carlo estimates of the same
    /// quantity. Commutative.
    pub fn merge(&self, other: &MomentEstimate) -> Result<MomentEstimate> {
        if self.method != Method::Mc || other.method != Method::Mc {
            return Err(Error::Domain("only Monte Carlo estimates can be pooled".into()));
        }
        let acc = self.to_accumulator().merge(&other.to_accumulator());
        let seed = match (self.seed, other.seed) {
            (Some(a), Some(b)) if a == b => Some(a),
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Ok(MomentEstimate {
            value: acc.mean,
            stderr: acc.stderr(),
            count: acc.count,
            method: Method::Mc,
            seed,
        })
    }

    /// Combined standard error with another independent estimate.
    pub fn combined_stderr(&self, other: &MomentEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// `|a - b|` in units of the combined standard error (infinite when
    /// both are exact and differ, zero when they agree exactly).
    pub fn z_score(&self, other: &MomentEstimate) -> f64 {
        let diff = (self.value - other.value).abs();
        let se = self.combined_stderr(other);
        if se > 0.0 {
            diff / se
        } else if diff <= 1e-12 * self.value.abs().max(other.value.abs()).max(1.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Scales value and standard error by a constant.
    pub fn scaled(&self, factor: f64) -> MomentEstimate {
        MomentEstimate {
            value: self.value * factor,
            stderr: self.stderr * factor.abs(),
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let acc: Accumulator = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_relative_eq!(acc.mean, mean, max_relative = 1e-12);
        assert_relative_eq!(acc.variance(), var, max_relative = 1e-10);
    }

    #[test]
    fn merge_is_commutative_and_matches_pooled() {
        let a: Accumulator = (0..300).map(|i| (i as f64).sin()).collect();
        let b: Accumulator = (300..1000).map(|i| (i as f64).sin()).collect();
        let all: Accumulator = (0..1000).map(|i| (i as f64).sin()).collect();
        let ab = a.merge(&b);
        let ba = b.merge(&a);
        assert_eq!(ab, ba);
        assert_relative_eq!(ab.mean, all.mean, epsilon = 1e-12);
        assert_relative_eq!(ab.m2, all.m2, max_relative = 1e-10);
    }

    #[test]
    fn estimate_merge_roundtrips() {
        let a: Accumulator = (0..500).map(|i| (i as f64 * 0.3).cos()).collect();
        let b: Accumulator = (500..900).map(|i| (i as f64 * 0.3).cos()).collect();
        let ea = MomentEstimate::from_accumulator(&a, 1);
        let eb = MomentEstimate::from_accumulator(&b, 1);
        let m1 = ea.merge(&eb).unwrap();
        let m2 = eb.merge(&ea).unwrap();
        assert_eq!(m1, m2);
        let direct = a.merge(&b);
        assert_relative_eq!(m1.value, direct.mean, epsilon = 1e-12);
        assert_relative_eq!(m1.stderr, direct.stderr(), max_relative = 1e-8);
        assert!(MomentEstimate::exact(1.0).merge(&ea).is_err());
    }
}
