//! Supercritical Galton–Watson martingale `W_n = Z_n / m^n`, the
//! exponential-rate counterpart of the polymer martingale.
//!
//! Populations are simulated generation by generation from the law of the
//! total offspring count, which is exact in distribution.

use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::{Accumulator, MomentEstimate};
use crate::par::map_tasks;
use crate::rng::{stream_seed, SplitMix64};
use crate::stats::{ks_gaussian, loglinear_slope, sample_moments, LineFit, TestReport};

/// Replicates per parallel task.
const GW_TASK_SIZE: u64 = 1 << 10;

/// Populations above this bound are flagged as overflowed.
pub const MAX_POPULATION: u64 = 1 << 62;

/// Offspring distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Offspring {
    Poisson { mean: f64 },
    /// `probs[k] = P(Z_1 = k)`.
    Table { probs: Vec<f64> },
}

impl Offspring {
    pub fn validate(&self) -> Result<()> {
        match self {
            Offspring::Poisson { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return domain(format!("Poisson offspring mean must be positive, got {mean}"));
                }
            }
            Offspring::Table { probs } => {
                if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return domain("offspring table needs finite nonnegative probabilities");
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return domain(format!("offspring table sums to {total}, not 1"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Offspring::Poisson { mean } => *mean,
            Offspring::Table { probs } => probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Offspring::Poisson { mean } => *mean,
            Offspring::Table { probs } => {
                let m = self.mean();
                probs.iter().enumerate().map(|(k, p)| (k as f64 - m).powi(2) * p).sum()
            }
        }
    }

    /// `a^2 = Var Z_1 / (m^2 - m)`.
    pub fn a2(&self) -> f64 {
        let m = self.mean();
        self.variance() / (m * m - m)
    }

    /// Total offspring of `z` individuals, or `None` past [`MAX_POPULATION`].
    pub fn next_generation(&self, z: u64, rng: &mut SplitMix64) -> Option<u64> {
        if z == 0 {
            return Some(0);
        }
        match self {
            Offspring::Poisson { mean } => {
                let lambda = mean * z as f64;
                if lambda > MAX_POPULATION as f64 / 2.0 {
                    return None;
                }
                let draw: f64 = Poisson::new(lambda).ok()?.sample(rng);
                let next = draw as u64;
                (next <= MAX_POPULATION).then_some(next)
            }
            Offspring::Table { probs } => {
                let (mut left, mut rest, mut total) = (z, 1.0, 0u64);
                for (k, &p) in probs.iter().enumerate() {
                    if left == 0 {
                        break;
                    }
                    let count = if k + 1 == probs.len() || p >= rest {
                        left
                    } else if p <= 0.0 {
                        0
                    } else {
                        Binomial::new(left, p / rest).ok()?.sample(rng)
                    };
                    total = total.checked_add((k as u64).checked_mul(count)?)?;
                    left -= count;
                    rest -= p;
                }
                (total <= MAX_POPULATION).then_some(total)
            }
        }
    }

    /// `Z_0 = 1, ..., Z_horizon`, or `None` on overflow.
    pub fn sample_path(&self, horizon: usize, rng: &mut SplitMix64) -> Option<Vec<u64>> {
        let mut path = Vec::with_capacity(horizon + 1);
        path.push(1u64);
        for k in 0..horizon {
            path.push(self.next_generation(path[k], rng)?);
        }
        Some(path)
    }
}

/// Offspring law, horizons `n < N` and replicate count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwConfig {
    pub offspring: Offspring,
    pub n: usize,
    pub big_n: usize,
    pub replicates: u64,
}

impl GwConfig {
    pub fn validate(&self) -> Result<()> {
        self.offspring.validate()?;
        let m = self.offspring.mean();
        if !(m > 1.0) {
            return Err(Error::Config(format!("offspring mean must exceed 1, got {m}")));
        }
        if self.n >= self.big_n {
            return Err(Error::Config(format!("need n < N, got n = {}, N = {}", self.n, self.big_n)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicate count must be positive".into()));
        }
        Ok(())
    }

    /// `Var(m^{n/2}(W_N - W_n)) = a^2 (1 - m^{-(N-n)})`.
    pub fn stat_variance(&self) -> f64 {
        let m = self.offspring.mean();
        self.offspring.a2() * (1.0 - m.powi(-((self.big_n - self.n) as i32)))
    }
}

/// One replicate of the process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwReplicate {
    pub w_n: f64,
    pub w_big: f64,
    pub z_n: u64,
    pub overflow: bool,
}

impl GwReplicate {
    pub fn extinct(&self) -> bool {
        !self.overflow && self.z_n == 0
    }

    /// `m^{n/2} (W_N - W_n)`.
    pub fn stat1(&self, m: f64, n: usize) -> Option<f64> {
        (!self.overflow).then(|| m.powf(n as f64 / 2.0) * (self.w_big - self.w_n))
    }

    /// `m^{n/2} (W_N - W_n) / W_n^{1/2}` on survival.
    pub fn stat2(&self, m: f64, n: usize) -> Option<f64> {
        if self.z_n == 0 {
            return None;
        }
        self.stat1(m, n).map(|s| s / self.w_n.sqrt())
    }
}

/// Independent replicates, in a thread-count independent order.
pub fn simulate_gw(cfg: &GwConfig, seed: u64) -> Result<Vec<GwReplicate>> {
    cfg.validate()?;
    let m = cfg.offspring.mean();
    let (scale_n, scale_big) = (m.powi(-(cfg.n as i32)), m.powi(-(cfg.big_n as i32)));
    let parts = map_tasks(cfg.replicates, GW_TASK_SIZE, |task| {
        let mut rng = SplitMix64::for_task(seed, task.index);
        (0..task.len)
            .map(|_| match cfg.offspring.sample_path(cfg.big_n, &mut rng) {
                Some(path) => GwReplicate {
                    w_n: path[cfg.n] as f64 * scale_n,
                    w_big: path[cfg.big_n] as f64 * scale_big,
                    z_n: path[cfg.n],
                    overflow: false,
                },
                None => GwReplicate { w_n: f64::NAN, w_big: f64::NAN, z_n: 0, overflow: true },
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Ensemble summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwSummary {
    pub a2: f64,
    pub replicates: u64,
    pub overflowed: u64,
    pub extinct_fraction: f64,
    pub mean_w_n: MomentEstimate,
    pub mean_w_big: MomentEstimate,
    /// Sample variance of `stat1` with its standard error.
    pub stat1_variance: MomentEstimate,
    /// `a^2 (1 - m^{-(N-n)})`.
    pub stat1_variance_target: f64,
}

pub fn summarize(cfg: &GwConfig, reps: &[GwReplicate], seed: u64) -> Result<GwSummary> {
    let m = cfg.offspring.mean();
    let ok: Vec<&GwReplicate> = reps.iter().filter(|r| !r.overflow).collect();
    let mean_of = |f: &dyn Fn(&GwReplicate) -> f64| {
        let acc: Accumulator = ok.iter().map(|r| f(r)).collect();
        MomentEstimate::from_accumulator(&acc, seed)
    };
    let stat1: Vec<f64> = ok.iter().filter_map(|r| r.stat1(m, cfg.n)).collect();
    let sm = sample_moments(&stat1)?;
    Ok(GwSummary {
        a2: cfg.offspring.a2(),
        replicates: reps.len() as u64,
        overflowed: (reps.len() - ok.len()) as u64,
        extinct_fraction: ok.iter().filter(|r| r.extinct()).count() as f64 / ok.len().max(1) as f64,
        mean_w_n: mean_of(&|r| r.w_n),
        mean_w_big: mean_of(&|r| r.w_big),
        stat1_variance: MomentEstimate {
            value: sm.variance,
            stderr: sm.variance_stderr,
            count: sm.count as u64,
            method: crate::estimate::Method::Mc,
            seed: Some(seed),
        },
        stat1_variance_target: cfg.stat_variance(),
    })
}

/// KS test of `stat2` on survivors against a fitted Gaussian.
pub fn survivor_ks(cfg: &GwConfig, reps: &[GwReplicate]) -> Result<TestReport> {
    let m = cfg.offspring.mean();
    let xs: Vec<f64> = reps.iter().filter_map(|r| r.stat2(m, cfg.n)).collect();
    let sm = sample_moments(&xs)?;
    let mut report = ks_gaussian(&xs, sm.mean, sm.variance)?;
    report.reference.insert("target_variance".into(), cfg.stat_variance());
    report.reference.insert("survivors".into(), xs.len() as f64);
    Ok(report)
}

/// `E(W_N - W_n)^2` over a grid of `n`, with a log-linear fit in `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwDecay {
    pub big_n: usize,
    pub points: Vec<(usize, MomentEstimate)>,
    pub fit: LineFit,
    /// `-ln m`.
    pub slope_target: f64,
}

pub fn l2_decay(offspring: &Offspring, ns: &[usize], big_n: usize, replicates: u64, seed: u64) -> Result<GwDecay> {
    let mut points = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let cfg = GwConfig { offspring: offspring.clone(), n, big_n, replicates };
        let s = stream_seed(seed, i as u64);
        let reps = simulate_gw(&cfg, s)?;
        let acc: Accumulator = reps.iter().filter(|r| !r.overflow).map(|r| (r.w_big - r.w_n).powi(2)).collect();
        points.push((n, MomentEstimate::from_accumulator(&acc, s)));
    }
    let fit = loglinear_slope(&points.iter().map(|(n, e)| (*n as f64, e.value, e.stderr)).collect::<Vec<_>>())?;
    Ok(GwDecay { big_n, points, fit, slope_target: -offspring.mean().ln() })
}

/// Law of `Z_k` for `k = 0..=horizon` by exact propagation of the
/// population-count chain; `probs` must have finite support.
pub fn exact_generation_laws(probs: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>> {
    let top = probs.len().saturating_sub(1);
    let cap = top.checked_pow(horizon as u32).filter(|&c| c <= 1 << 16).ok_or_else(|| Error::Budget {
        what: "exact Galton-Watson enumeration".into(),
        needed: format!("{top}^{horizon} states"),
        limit: "65536 states".into(),
    })?;
    let rows = transition_rows(probs, cap);
    let mut laws = vec![vec![0.0, 1.0]];
    for _ in 0..horizon {
        let prev = laws.last().unwrap();
        let mut next = vec![0.0; cap + 1];
        for (z, &p) in prev.iter().enumerate().filter(|e| *e.1 != 0.0) {
            for (j, &q) in rows[z].iter().enumerate() {
                next[j] += p * q;
            }
        }
        laws.push(next);
    }
    Ok(laws)
}

/// `rows[z][j] = P(Z_{k+1} = j | Z_k = z)` for `z <= cap`.
fn transition_rows(probs: &[f64], cap: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0]];
    for z in 1..=cap {
        let prev = &rows[z - 1];
        let mut next = vec![0.0; prev.len() + probs.len() - 1];
        for (i, &a) in prev.iter().enumerate() {
            for (k, &b) in probs.iter().enumerate() {
                next[i + k] += a * b;
            }
        }
        rows.push(next);
    }
    rows
}

/// `E(W_N - W_n)^2` by exact enumeration of the joint law of `(Z_n, Z_N)`.
pub fn exact_increment_second_moment(probs: &[f64], n: usize, big_n: usize) -> Result<f64> {
    if n >= big_n {
        return domain(format!("need n < N, got n = {n}, N = {big_n}"));
    }
    let m: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let law_n = exact_generation_laws(probs, n)?.pop().unwrap();
    let top = probs.len() - 1;
    let cap = top.pow(big_n as u32);
    let rows = transition_rows(probs, cap);
    let mut total = 0.0;
    for (z, &p) in law_n.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut cond = vec![0.0; cap + 1];
        cond[z] = 1.0;
        for _ in n..big_n {
            let mut next = vec![0.0; cap + 1];
            for (i, &c) in cond.iter().enumerate() {
                if c != 0.0 {
                    for (j, &q) in rows[i].iter().enumerate() {
                        next[j] += c * q;
                    }
                }
            }
            cond = next;
        }
        let w_n = z as f64 / m.powi(n as i32);
        total += p * cond
            .iter()
            .enumerate()
            .map(|(j, &c)| c * (j as f64 / m.powi(big_n as i32) - w_n).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TABLE: [f64; 3] = [0.2, 0.3, 0.5];

    #[test]
    fn a2_closed_forms() {
        assert_relative_eq!(Offspring::Poisson { mean: 2.0 }.a2(), 1.0);
        let t = Offspring::Table { probs: TABLE.to_vec() };
        let (m, v) = (1.3, 0.3 + 2.0 - 1.69);
        assert_relative_eq!(t.mean(), m, epsilon = 1e-15);
        assert_relative_eq!(t.variance(), v, epsilon = 1e-15);
        assert_relative_eq!(t.a2(), v / (m * m - m), epsilon = 1e-14);
    }

    #[test]
    fn exact_laws_are_normalised_with_unit_mean_martingale() {
        let laws = exact_generation_laws(&TABLE, 5).unwrap();
        for (k, law) in laws.iter().enumerate() {
            assert_relative_eq!(law.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            let mean: f64 = law.iter().enumerate().map(|(z, p)| z as f64 * p).sum();
            assert_relative_eq!(mean, 1.3f64.powi(k as i32), max_relative = 1e-12);
        }
    }

    #[test]
    fn increment_variance_matches_enumeration() {
        let t = Offspring::Table { probs: TABLE.to_vec() };
        let m = t.mean();
        for (n, big_n) in [(0, 1), (1, 3), (2, 5)] {
            let exact = exact_increment_second_moment(&TABLE, n, big_n).unwrap();
            let closed = t.a2() * m.powi(-(n as i32)) * (1.0 - m.powi(-((big_n - n) as i32)));
            assert_relative_eq!(exact, closed, max_relative = 1e-10);
        }
    }

    #[test]
    fn deterministic_offspring_has_no_fluctuation() {
        let cfg = GwConfig { offspring: Offspring::Table { probs: vec![0.0, 0.0, 1.0] }, n: 3, big_n: 10, replicates: 100 };
        let reps = simulate_gw(&cfg, 1).unwrap();
        for r in &reps {
            assert_eq!((r.w_n, r.w_big), (1.0, 1.0));
            assert_eq!(r.stat1(2.0, 3), Some(0.0));
        }
    }

    #[test]
    fn table_simulation_matches_exact_law() {
        let t = Offspring::Table { probs: TABLE.to_vec() };
        let law = exact_generation_laws(&TABLE, 4).unwrap().pop().unwrap();
        let mut rng = SplitMix64::new(7);
        let samples = 200_000;
        let mut freq = vec![0u64; law.len()];
        for _ in 0..samples {
            freq[t.sample_path(4, &mut rng).unwrap()[4] as usize] += 1;
        }
        for (z, &p) in law.iter().enumerate() {
            let se = (p * (1.0 - p) / samples as f64).sqrt().max(1e-9);
            assert!((freq[z] as f64 / samples as f64 - p).abs() < 5.0 * se, "z = {z}");
        }
    }

    #[test]
    fn poisson_run_is_a_unit_mean_martingale() {
        let cfg = GwConfig { offspring: Offspring::Poisson { mean: 2.0 }, n: 5, big_n: 12, replicates: 50_000 };
        let reps = simulate_gw(&cfg, 3).unwrap();
        let s = summarize(&cfg, &reps, 3).unwrap();
        assert_eq!(s.overflowed, 0);
        for e in [s.mean_w_n, s.mean_w_big] {
            assert!((e.value - 1.0).abs() < 3.0 * e.stderr, "{e:?}");
        }
        // extinction probability q solves q = exp(2(q - 1))
        let mut q: f64 = 0.0;
        for _ in 0..200 {
            q = (2.0 * (q - 1.0)).exp();
        }
        assert!((s.extinct_fraction - q).abs() < 0.01);
        let v = s.stat1_variance;
        assert!((v.value - s.stat1_variance_target).abs() < 4.0 * v.stderr, "{v:?}");
    }

    #[test]
    fn config_validation() {
        let bad = |o, n, big_n| GwConfig { offspring: o, n, big_n, replicates: 1 }.validate().is_err();
        assert!(bad(Offspring::Poisson { mean: 0.9 }, 1, 2));
        assert!(bad(Offspring::Poisson { mean: 2.0 }, 3, 3));
        assert!(bad(Offspring::Table { probs: vec![0.5, 0.4] }, 1, 2));
    }

    #[test]
    fn decay_slope_is_minus_log_mean() {
        let d = l2_decay(&Offspring::Poisson { mean: 2.0 }, &[2, 4, 6, 8, 10], 24, 20_000, 9).unwrap();
        assert!((d.fit.slope / d.slope_target - 1.0).abs() < 0.1, "{:?}", d.fit);
    }
}
