//! Simple random walks on `Z^d`, replica samplers, intersection counts and
//! exact small-horizon oracles.

pub mod exact;
pub mod point;
pub mod returns;
pub mod walk;

pub use exact::{
    difference_kernel, enumerate_pair_exact, enumerate_quad_exact, PairLawEntry, PairLawTable,
    QuadLawTable, SrwLaw, MAX_PAIR_HORIZON,
};
pub use point::{check_dim, LatticePoint};
pub use returns::{
    first_hit_series, first_return_series, intersection_exp_at_meeting, intersection_exp_moments,
    return_series, shifted_exp_moment, transition_series,
};
pub use walk::{
    sample_diff, sample_endpoint, sample_pair, sample_quad, sample_quad_classes, ClassCounts, CoincidenceClass,
    DiffWalk, PairSummary, ReplicaSample,
};

use crate::estimate::MomentEstimate;
use crate::par::{mc_mean, DEFAULT_TASK_SIZE};

/// Monte Carlo estimate of `P[e^{lambda2 N_n} f(S_n - S~_n)]`, simulated on
/// the difference walk.
pub fn pair_functional_mc<F>(d: usize, n: usize, lambda2: f64, endpoint_fn: F, budget: u64, seed: u64) -> MomentEstimate
where
    F: Fn(&[i32]) -> f64 + Sync + Send,
{
    let acc = mc_mean(seed, budget, DEFAULT_TASK_SIZE, |rng| {
        let s = sample_diff(d, n, rng);
        (lambda2 * s.intersections as f64).exp() * endpoint_fn(&s.diff[..d])
    });
    MomentEstimate::from_accumulator(&acc, seed)
}

/// Return probability estimated by simulation, without the Green function.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReturnFrequency {
    /// Fraction of walks back at the origin within `horizon` steps.
    pub within: MomentEstimate,
    /// Estimated probability of a first return after `horizon`.
    pub tail: f64,
    /// `within + tail`, with the standard error of `within`.
    pub estimate: MomentEstimate,
}

/// `pi_d` from the return frequency of `samples` walks of `horizon` steps.
///
/// Late first returns have probability `f_{2s} ~ (1 - pi)^2 c s^{-d/2}`,
/// with `c = 2 (d / (4 pi))^{d/2}` from the local limit theorem; the tail
/// past the horizon is added with `pi` replaced by the observed frequency.
pub fn return_frequency_mc(d: usize, horizon: usize, samples: u64, seed: u64) -> crate::Result<ReturnFrequency> {
    check_dim(d)?;
    if horizon < 2 {
        return Err(crate::Error::Domain(format!("return horizon must be at least 2, got {horizon}")));
    }
    let two_d = 2 * d as u32;
    let acc = mc_mean(seed, samples, DEFAULT_TASK_SIZE, |rng| {
        let mut pos = [0i32; crate::env_model::MAX_DIM];
        let mut l1 = 0i64;
        for _ in 0..horizon {
            let dir = rng.below(two_d);
            let axis = (dir >> 1) as usize;
            let before = pos[axis].abs() as i64;
            walk::apply_step(&mut pos, dir);
            l1 += pos[axis].abs() as i64 - before;
            if l1 == 0 {
                return 1.0;
            }
        }
        0.0
    });
    let within = MomentEstimate::from_accumulator(&acc, seed);
    let df = d as f64;
    let c = 2.0 * (df / (4.0 * std::f64::consts::PI)).powf(df / 2.0);
    let a = df / 2.0 - 1.0;
    let s = (horizon / 2) as f64;
    let tail = (1.0 - within.value).powi(2) * c * (s + 0.5).powf(-a) / a;
    Ok(ReturnFrequency {
        within,
        tail,
        estimate: MomentEstimate { value: within.value + tail, ..within },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn return_frequency_short_horizon_is_exact_in_mean() {
        // within two steps the walk returns with probability 1 / (2d)
        let r = return_frequency_mc(3, 2, 200_000, 1).unwrap();
        assert!((r.within.value - 1.0 / 6.0).abs() < 4.0 * r.within.stderr);
    }
}
