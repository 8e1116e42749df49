//! Diagnostics of the pair walk used by the limit theory: geometric law of
//! the total intersection count, asymptotic independence of `N_n` and the
//! rescaled endpoint, inverse moments of `Y_n / sqrt(n)` and moments of the
//! Green-weighted functional.

use serde::{Deserialize, Serialize};

use super::quad::D4Report;
use super::{McBudget, ReplicaContext};
use crate::error::{domain, Result};
use crate::estimate::{Accumulator, MomentEstimate};
use crate::green::LocalTransitionTable;
use crate::lattice_rw::{check_dim, sample_diff, sample_endpoint};
use crate::par::{map_tasks, mc_mean, DEFAULT_TASK_SIZE};
use crate::rng::{stream_seed, SplitMix64};
use crate::stats::{chi2_geometric, pearson, TestReport};

/// Samples per task for long walks.
const LONG_TASK_SIZE: u64 = 1 << 10;

/// Histogram of `N_n` (`hist[k]` counts `N_n = k`).
pub fn intersection_histogram(d: usize, n: usize, samples: u64, seed: u64) -> Result<Vec<u64>> {
    check_dim(d)?;
    let parts = map_tasks(samples, LONG_TASK_SIZE, |task| {
        let mut rng = SplitMix64::for_task(seed, task.index);
        let mut hist = Vec::<u64>::new();
        for _ in 0..task.len {
            let k = sample_diff(d, n, &mut rng).intersections as usize;
            if hist.len() <= k {
                hist.resize(k + 1, 0);
            }
            hist[k] += 1;
        }
        hist
    });
    let len = parts.iter().map(Vec::len).max().unwrap_or(0);
    let mut hist = vec![0u64; len];
    for p in parts {
        for (h, c) in hist.iter_mut().zip(p) {
            *h += c;
        }
    }
    Ok(hist)
}

/// Pearson correlation of `N_n` with `|Y_n|^2 / n`.
pub fn intersection_displacement_correlation(d: usize, n: usize, samples: u64, seed: u64) -> Result<f64> {
    check_dim(d)?;
    let parts = map_tasks(samples, LONG_TASK_SIZE, |task| {
        let mut rng = SplitMix64::for_task(seed, task.index);
        (0..task.len)
            .map(|_| {
                let s = sample_diff(d, n, &mut rng);
                (s.intersections as f64, s.r2 as f64 / n as f64)
            })
            .collect::<Vec<_>>()
    });
    let (xs, ys): (Vec<f64>, Vec<f64>) = parts.into_iter().flatten().unzip();
    pearson(&xs, &ys)
}

/// `P[|Y_n / sqrt(n)|^{-a} 1{Y_n != 0}]`.
///
/// Sites with `|Y_n|_inf <= r0 = ceil(sqrt(n) / 2)` are summed exactly with
/// the Fourier transition table; the rest is sampled from the endpoint law
/// of `Y_n`, which is that of `S_{2n}`.
pub fn inverse_moment(d: usize, n: usize, a: f64, budget: McBudget) -> Result<MomentEstimate> {
    check_dim(d)?;
    if n == 0 || !(a > 0.0) {
        return domain(format!("inverse moment needs n >= 1 and a > 0, got n = {n}, a = {a}"));
    }
    let r0 = ((n as f64).sqrt() / 2.0).ceil() as usize;
    let table = LocalTransitionTable::new(d, n, r0)?;
    let scale = 1.0 / n as f64;
    let mut inner = 0.0;
    table.for_each(|z, p, images| {
        let r2: i64 = z.iter().map(|&c| c as i64 * c as i64).sum();
        if r2 > 0 {
            inner += images as f64 * p * (r2 as f64 * scale).powf(-a / 2.0);
        }
    });
    let acc = mc_mean(budget.seed, budget.samples, DEFAULT_TASK_SIZE, |rng| {
        let y = sample_endpoint(d, 2 * n as u64, rng);
        if y[..d].iter().all(|c| c.unsigned_abs() as usize <= r0) {
            0.0
        } else {
            let r2: i64 = y[..d].iter().map(|&c| c as i64 * c as i64).sum();
            (r2 as f64 * scale).powf(-a / 2.0)
        }
    });
    let outer = MomentEstimate::from_accumulator(&acc, budget.seed);
    Ok(MomentEstimate { value: inner + outer.value, ..outer })
}

impl ReplicaContext<'_> {
    /// `P[(e^{lambda2 N_n} n^{(d-2)/2} G(Y_n))^{1+delta}]`.
    pub fn green_moment(&self, n: usize, delta: f64, budget: McBudget) -> Result<MomentEstimate> {
        let d = self.dim();
        if !(delta > 0.0 && delta < 2.0 / (d as f64 - 2.0)) {
            return domain(format!("delta must lie in (0, 2/(d-2)), got {delta}"));
        }
        let (l2, scale, g) = (self.cumulants.lambda2, self.diffusive_scale(n), self.green);
        let p = 1.0 + delta;
        let parts = map_tasks(budget.samples, LONG_TASK_SIZE, |task| {
            let mut rng = SplitMix64::for_task(budget.seed, task.index);
            let mut acc = Accumulator::new();
            for _ in 0..task.len {
                let s = sample_diff(d, n, &mut rng);
                let v = (l2 * s.intersections as f64).exp() * scale * g.get(&s.diff[..d]);
                acc.push(v.powf(p));
            }
            acc
        });
        let acc = parts.iter().fold(Accumulator::new(), |x, y| x.merge(y));
        Ok(MomentEstimate::from_accumulator(&acc, budget.seed))
    }
}

/// Grids and budgets of the lemma diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub geometric_n: usize,
    pub geometric_samples: u64,
    pub correlation_n: usize,
    pub correlation_samples: u64,
    pub inverse_n: Vec<usize>,
    pub inverse_a: Vec<f64>,
    pub inverse_samples: u64,
    pub green_n: Vec<usize>,
    pub delta: f64,
    pub green_samples: u64,
    pub d4_k: Vec<usize>,
    pub d4_samples: u64,
    pub seed: u64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            geometric_n: 2000,
            // beyond ~2e4 samples the finite-horizon law of N_2000 is
            // distinguishable from the geometric limit
            geometric_samples: 10_000,
            correlation_n: 2000,
            correlation_samples: 1_000_000,
            inverse_n: vec![100, 1000, 10_000],
            inverse_a: vec![2.5, 3.5],
            inverse_samples: 1_000_000,
            green_n: vec![100, 1000, 10_000],
            delta: 0.2,
            green_samples: 100_000,
            d4_k: vec![8, 16, 32, 64, 128],
            d4_samples: 100_000,
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseMomentRow {
    pub a: f64,
    pub n: usize,
    pub estimate: MomentEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub geometric: TestReport,
    pub histogram: Vec<u64>,
    pub correlation: f64,
    pub correlation_samples: u64,
    pub inverse_moments: Vec<InverseMomentRow>,
    pub green_moments: Vec<(usize, MomentEstimate)>,
    pub d4: D4Report,
}

impl LemmaReport {
    /// Inverse moment of order `a` at `n_to` over its value at `n_from`.
    pub fn inverse_growth(&self, a: f64, n_from: usize, n_to: usize) -> Option<f64> {
        let at = |n| self.inverse_moments.iter().find(|r| r.a == a && r.n == n).map(|r| r.estimate.value);
        Some(at(n_to)? / at(n_from)?)
    }

    /// Largest relative deviation of the Green moment from its value at the
    /// smallest `n`.
    pub fn green_moment_spread(&self) -> Option<f64> {
        let first = self.green_moments.iter().min_by_key(|p| p.0)?.1.value;
        self.green_moments
            .iter()
            .map(|p| (p.1.value / first - 1.0).abs())
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }
}

impl ReplicaContext<'_> {
    pub fn lemma_checks(&self, cfg: &LemmaConfig) -> Result<LemmaReport> {
        let d = self.dim();
        for &a in &cfg.inverse_a {
            if !(a > 0.0 && a != d as f64 && a < d as f64 + 1.0) {
                return domain(format!("inverse moment order must lie in (0, d) or (d, d+1), got {a}"));
            }
        }
        let seed = |i: u64| stream_seed(cfg.seed, i);
        let histogram = intersection_histogram(d, cfg.geometric_n, cfg.geometric_samples, seed(0))?;
        let geometric = chi2_geometric(&histogram, self.green.pi_d())?;
        let correlation = intersection_displacement_correlation(d, cfg.correlation_n, cfg.correlation_samples, seed(1))?;
        let mut inverse_moments = Vec::new();
        for (i, &a) in cfg.inverse_a.iter().enumerate() {
            for (j, &n) in cfg.inverse_n.iter().enumerate() {
                let b = McBudget::new(cfg.inverse_samples, seed(100 + 10 * i as u64 + j as u64));
                inverse_moments.push(InverseMomentRow { a, n, estimate: inverse_moment(d, n, a, b)? });
            }
        }
        let mut green_moments = Vec::new();
        for (j, &n) in cfg.green_n.iter().enumerate() {
            let b = McBudget::new(cfg.green_samples, seed(200 + j as u64));
            green_moments.push((n, self.green_moment(n, cfg.delta, b)?));
        }
        let d4 = self.d4_increment(&cfg.d4_k, McBudget::new(cfg.d4_samples, seed(300)))?;
        Ok(LemmaReport {
            geometric,
            histogram,
            correlation,
            correlation_samples: cfg.correlation_samples,
            inverse_moments,
            green_moments,
            d4,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_rw::return_series;

    #[test]
    fn histogram_counts_every_sample() {
        let h = intersection_histogram(3, 50, 5000, 1).unwrap();
        assert_eq!(h.iter().sum::<u64>(), 5000);
        assert_eq!(h[0], 0);
        assert!(h[1] > h[2]);
    }

    #[test]
    fn inverse_moment_exact_part_is_consistent() {
        // a tiny order makes the statistic close to P(Y_n != 0)
        let n = 100;
        let est = inverse_moment(3, n, 1e-9, McBudget::new(200_000, 3)).unwrap();
        let u = return_series(3, n).unwrap()[n];
        assert!((est.value - (1.0 - u)).abs() < 1e-6 + 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn inverse_moment_matches_plain_sampling_at_moderate_order() {
        let n = 64;
        let a = 1.5;
        let est = inverse_moment(3, n, a, McBudget::new(400_000, 4)).unwrap();
        let acc = mc_mean(5, 400_000, DEFAULT_TASK_SIZE, |rng| {
            let y = sample_endpoint(3, 2 * n as u64, rng);
            let r2: i64 = y[..3].iter().map(|&c| c as i64 * c as i64).sum();
            if r2 == 0 {
                0.0
            } else {
                (r2 as f64 / n as f64).powf(-a / 2.0)
            }
        });
        let plain = MomentEstimate::from_accumulator(&acc, 5);
        assert!(est.z_score(&plain) < 3.0, "{est:?} vs {plain:?}");
    }
}
