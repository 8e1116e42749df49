//! Uniform sampling of closed simple-random-walk paths, used to condition
//! pairs of walks on meeting at a fixed time.
//!
//! Two independent `k`-step walks `S`, `S~` with `S_k = S~_k` correspond
//! bijectively to closed `2k`-step paths `l`: `S` takes the steps
//! `l_1..l_k` and `S~` takes `-l_{2k}, ..., -l_{k+1}`.

use crate::env_model::MAX_DIM;
use crate::error::Result;
use crate::lattice_rw::check_dim;
use crate::lattice_rw::walk::apply_step;
use crate::rng::SplitMix64;

fn ln_binom(lf: &[f64], n: usize, k: usize) -> f64 {
    lf[n] - lf[k] - lf[n - k]
}

/// Sampler of uniform closed paths of length `2k`.
#[derive(Clone, Debug)]
pub struct ClosedWalkSampler {
    dim: usize,
    half: usize,
    /// `cdf[j][m][h]`: probability that, among closed `2m`-step paths in `j`
    /// dimensions, the first axis carries at most `2h` steps.
    cdf: Vec<Vec<Vec<f64>>>,
}

impl ClosedWalkSampler {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        check_dim(d)?;
        let mut lf = vec![0.0; 2 * k + 1];
        for i in 1..lf.len() {
            lf[i] = lf[i - 1] + (i as f64).ln();
        }
        // ln of the number of closed 2m-step paths in j dimensions
        let mut lc = vec![vec![f64::NEG_INFINITY; k + 1]; d + 1];
        for m in 0..=k {
            lc[1][m] = ln_binom(&lf, 2 * m, m);
        }
        let mut cdf = vec![Vec::new(); d + 1];
        for j in 2..=d {
            let mut tables = Vec::with_capacity(k + 1);
            for m in 0..=k {
                let logs: Vec<f64> = (0..=m)
                    .map(|h| ln_binom(&lf, 2 * m, 2 * h) + ln_binom(&lf, 2 * h, h) + lc[j - 1][m - h])
                    .collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
                lc[j][m] = top + sum.ln();
                let mut acc = 0.0;
                let table: Vec<f64> = logs
                    .iter()
                    .map(|l| {
                        acc += (l - top).exp() / sum;
                        acc
                    })
                    .collect();
                tables.push(table);
            }
            cdf[j] = tables;
        }
        Ok(Self { dim: d, half: k, cdf })
    }

    pub fn half_length(&self) -> usize {
        self.half
    }

    /// Number of steps along each axis, halved.
    pub fn sample_axis_halves(&self, rng: &mut SplitMix64) -> [usize; MAX_DIM] {
        let mut halves = [0usize; MAX_DIM];
        let mut m = self.half;
        for (i, h) in halves.iter_mut().enumerate().take(self.dim - 1) {
            let table = &self.cdf[self.dim - i][m];
            let u = rng.uniform();
            let pick = table.partition_point(|&c| c < u).min(m);
            *h = pick;
            m -= pick;
        }
        halves[self.dim - 1] = m;
        halves
    }

    /// Fills `steps` with a uniform closed path of length `2k`.
    pub fn sample(&self, rng: &mut SplitMix64, steps: &mut Vec<u32>) {
        steps.clear();
        let halves = self.sample_axis_halves(rng);
        for (axis, &h) in halves.iter().enumerate().take(self.dim) {
            for _ in 0..h {
                steps.push(2 * axis as u32);
                steps.push(2 * axis as u32 + 1);
            }
        }
        for i in (1..steps.len()).rev() {
            let j = rng.below(i as u32 + 1) as usize;
            steps.swap(i, j);
        }
    }
}

/// Advances the two walks of a meeting pair from the closed path `steps`
/// at time `t`.
#[inline(always)]
pub fn step_pair(steps: &[u32], t: usize, a: &mut [i32; MAX_DIM], b: &mut [i32; MAX_DIM]) {
    let n = steps.len();
    apply_step(a, steps[t]);
    apply_step(b, steps[n - 1 - t] ^ 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn closed_paths_are_closed_and_meet() {
        let s = ClosedWalkSampler::new(3, 7).unwrap();
        let mut rng = SplitMix64::new(1);
        let mut steps = Vec::new();
        for _ in 0..1000 {
            s.sample(&mut rng, &mut steps);
            assert_eq!(steps.len(), 14);
            let (mut a, mut b) = ([0; MAX_DIM], [0; MAX_DIM]);
            for t in 0..7 {
                step_pair(&steps, t, &mut a, &mut b);
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn path_law_is_uniform() {
        // all closed 4-step paths in d = 3 are equally likely
        let s = ClosedWalkSampler::new(3, 2).unwrap();
        let mut rng = SplitMix64::new(2);
        let mut steps = Vec::new();
        let n = 900_000;
        let mut freq: HashMap<Vec<u32>, u32> = HashMap::new();
        for _ in 0..n {
            s.sample(&mut rng, &mut steps);
            *freq.entry(steps.clone()).or_default() += 1;
        }
        // 6 * 6 paths of the form (a, -a, b, -b) etc.: count them directly
        let mut closed = 0;
        for c in 0..6u32.pow(4) {
            let mut pos = [0; MAX_DIM];
            let mut x = c;
            for _ in 0..4 {
                apply_step(&mut pos, x % 6);
                x /= 6;
            }
            closed += (pos == [0; MAX_DIM]) as u32;
        }
        assert_eq!(closed, 90);
        assert_eq!(freq.len(), 90);
        let p = 1.0 / 90.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for (path, &count) in &freq {
            let f = count as f64 / n as f64;
            assert!((f - p).abs() < 5.0 * se, "{path:?}: {f}");
        }
    }

    #[test]
    fn axis_split_matches_return_probability() {
        // P(all steps on axis 0) = C(2k, k) / (number of closed paths)
        let d = 4;
        let k = 5;
        let s = ClosedWalkSampler::new(d, k).unwrap();
        let u = crate::lattice_rw::return_series(d, k).unwrap()[k];
        let closed = u * (2.0 * d as f64).powi(2 * k as i32);
        let expect = 252.0 / closed;
        let mut rng = SplitMix64::new(3);
        let n = 2_000_000;
        let hits = (0..n).filter(|_| s.sample_axis_halves(&mut rng)[0] == k).count();
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - expect).abs() < 5.0 * se);
    }
}
