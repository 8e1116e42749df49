//! Counter-based random numbers.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key:
//! environment values hash `(seed, t, x)` directly, and Monte Carlo tasks
//! draw from a SplitMix64 stream whose seed is derived from
//! `(master seed, task index)`. Results therefore do not depend on how
//! tasks are scheduled across threads.

use rand::RngCore;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer (a bijection on `u64`).
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream owned by task `task` under `master`.
#[inline]
pub fn stream_seed(master: u64, task: u64) -> u64 {
    mix64(master ^ mix64(task.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Maps 64 random bits to the open interval (0, 1) with 52-bit resolution.
#[inline(always)]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn for_task(master: u64, task: u64) -> Self {
        Self::new(stream_seed(master, task))
    }

    #[inline(always)]
    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on (0, 1).
    #[inline(always)]
    pub fn uniform(&mut self) -> f64 {
        open_unit(self.next())
    }

    /// Unbiased integer in `0..n` (Lemire's multiply-shift with rejection).
    #[inline(always)]
    pub fn below(&mut self, n: u32) -> u32 {
        debug_assert!(n > 0);
        let mut m = (self.next() >> 32) * n as u64;
        let mut low = m as u32;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = (self.next() >> 32) * n as u64;
                low = m as u32;
            }
        }
        (m >> 32) as u32
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = SplitMix64::for_task(7, 3);
        let mut b = SplitMix64::for_task(7, 3);
        let mut c = SplitMix64::for_task(7, 4);
        let xs: Vec<u64> = (0..16).map(|_| a.next()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next()).collect();
        let zs: Vec<u64> = (0..16).map(|_| c.next()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn below_is_uniform_on_small_ranges() {
        let mut rng = SplitMix64::new(11);
        let n = 36u32;
        let draws = 360_000;
        let mut counts = vec![0u64; n as usize];
        for _ in 0..draws {
            counts[rng.below(n) as usize] += 1;
        }
        let expected = draws as f64 / n as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 35 degrees of freedom; 0.999 quantile is about 66.6
        assert!(chi2 < 66.6, "chi2 = {chi2}");
    }

    #[test]
    fn open_unit_never_hits_the_endpoints() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
    }
}
