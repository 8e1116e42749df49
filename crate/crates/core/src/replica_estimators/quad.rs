//! Four-replica functionals: `E W_n^4` and the fourth moment of the
//! martingale increments.
//!
//! With `Sigma_{0,k} = lambda4 N4 + lambda3 N3 + 2 lambda2 N22 + lambda2 N20`
//! over times `0..k`,
//! `E W_n^4 = P[e^{Sigma_{0,n}}]` and
//! `E D_{k+1}^4 = P[e^{Sigma_{0,k}} (gamma4 1{E4} + gamma2 1{E22})]`, the
//! indicators taken at time `k`.

use serde::{Deserialize, Serialize};

use super::bridge::{step_pair, ClosedWalkSampler};
use super::{McBudget, ReplicaContext};
use crate::env_model::{CumulantSet, EnvFieldSpec, MAX_DIM};
use crate::error::{domain, Result};
use crate::estimate::{Accumulator, MomentEstimate};
use crate::lattice_rw::{
    enumerate_quad_exact, return_series, sample_quad_classes, ClassCounts, CoincidenceClass,
};
use crate::par::{map_tasks, mc_mean, DEFAULT_TASK_SIZE};
use crate::partition_engine::{evolve_profile, run_ensemble, SweepOptions};
use crate::rng::SplitMix64;
use crate::stats::{loglog_slope, LineFit};

/// Largest horizon of the exact four-walk enumeration.
pub const MAX_QUAD_HORIZON: usize = 2;

/// Samples per task for bridge sampling (each sample costs `O(k)`).
const BRIDGE_TASK_SIZE: u64 = 1 << 12;

/// `E D_{k+1}^4` over a grid of `k` with the fitted log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct D4Report {
    pub points: Vec<(usize, MomentEstimate)>,
    pub fit: LineFit,
}

impl ReplicaContext<'_> {
    fn exponent(&self, cc: &ClassCounts) -> f64 {
        let c = &self.cumulants;
        cc.exponent(c.lambda2, c.lambda3(), c.lambda4())
    }

    fn increment_weight(&self, class: CoincidenceClass) -> f64 {
        match class {
            CoincidenceClass::Four => self.cumulants.gamma4,
            CoincidenceClass::TwoTwo => self.cumulants.gamma2,
            _ => 0.0,
        }
    }

    /// `E W_n^4` by exhaustive enumeration of four walks (`n <= 2`).
    pub fn fourth_moment_exact(&self, n: usize) -> Result<MomentEstimate> {
        if n > MAX_QUAD_HORIZON {
            return domain(format!("exact four-walk enumeration is limited to n <= {MAX_QUAD_HORIZON}"));
        }
        if n == 0 {
            return Ok(MomentEstimate::exact(1.0));
        }
        let table = enumerate_quad_exact::<f64>(n, self.dim())?;
        Ok(MomentEstimate::exact(table.expect(|cc, _| self.exponent(cc).exp())))
    }

    pub fn fourth_moment_mc(&self, n: usize, budget: McBudget) -> MomentEstimate {
        let d = self.dim();
        let acc = mc_mean(budget.seed, budget.samples, DEFAULT_TASK_SIZE, |rng| {
            let (cc, _) = sample_quad_classes(d, n, rng);
            self.exponent(&cc).exp()
        });
        MomentEstimate::from_accumulator(&acc, budget.seed)
    }

    /// Exact for `n <= 2`, Monte Carlo beyond.
    pub fn fourth_moment(&self, n: usize, budget: McBudget) -> Result<MomentEstimate> {
        if n <= MAX_QUAD_HORIZON {
            self.fourth_moment_exact(n)
        } else {
            Ok(self.fourth_moment_mc(n, budget))
        }
    }

    /// `E D_{k+1}^4` by exhaustive enumeration (`k <= 2`).
    pub fn d4_exact(&self, k: usize) -> Result<MomentEstimate> {
        if k > MAX_QUAD_HORIZON {
            return domain(format!("exact four-walk enumeration is limited to k <= {MAX_QUAD_HORIZON}"));
        }
        if k == 0 {
            return Ok(MomentEstimate::exact(self.cumulants.gamma4));
        }
        let table = enumerate_quad_exact::<f64>(k, self.dim())?;
        Ok(MomentEstimate::exact(
            table.expect(|cc, cl| self.exponent(cc).exp() * self.increment_weight(cl)),
        ))
    }

    /// `E D_{k+1}^4` by plain simulation of four walks.
    pub fn d4_quad_mc(&self, k: usize, budget: McBudget) -> MomentEstimate {
        let d = self.dim();
        let acc = mc_mean(budget.seed, budget.samples, DEFAULT_TASK_SIZE, |rng| {
            let (cc, cl) = sample_quad_classes(d, k, rng);
            let w = self.increment_weight(cl);
            if w == 0.0 {
                0.0
            } else {
                self.exponent(&cc).exp() * w
            }
        });
        MomentEstimate::from_accumulator(&acc, budget.seed)
    }

    /// `E D_{k+1}^4` with walks `1, 2` and `3, 4` conditioned to meet at
    /// time `k`:
    /// `u_k^2 P[e^{Sigma_{0,k}} (3 gamma2 + (gamma4 - 3 gamma2) 1{S1_k = S3_k}) | bridges]`,
    /// where `u_k = P(S_k = S~_k)`.
    pub fn d4_bridge(&self, k: usize, budget: McBudget) -> Result<MomentEstimate> {
        if k == 0 {
            return Ok(MomentEstimate::exact(self.cumulants.gamma4));
        }
        let d = self.dim();
        let u = return_series(d, k)?[k];
        let sampler = ClosedWalkSampler::new(d, k)?;
        let (g2, g4) = (self.cumulants.gamma2, self.cumulants.gamma4);
        let parts = map_tasks(budget.samples, BRIDGE_TASK_SIZE, |task| {
            let mut rng = SplitMix64::for_task(budget.seed, task.index);
            let (mut a, mut b) = (Vec::with_capacity(2 * k), Vec::with_capacity(2 * k));
            let mut acc = Accumulator::new();
            for _ in 0..task.len {
                sampler.sample(&mut rng, &mut a);
                sampler.sample(&mut rng, &mut b);
                let mut pos = [[0i32; MAX_DIM]; 4];
                let mut cc = ClassCounts::default();
                for t in 0..k {
                    cc.record(CoincidenceClass::of(&pos));
                    let [p0, p1, p2, p3] = &mut pos;
                    step_pair(&a, t, p0, p1);
                    step_pair(&b, t, p2, p3);
                }
                debug_assert!(pos[0] == pos[1] && pos[2] == pos[3]);
                let all = if pos[0] == pos[2] { g4 - 3.0 * g2 } else { 0.0 };
                acc.push(self.exponent(&cc).exp() * (3.0 * g2 + all));
            }
            acc
        });
        let acc = parts.iter().fold(Accumulator::new(), |x, y| x.merge(y));
        Ok(MomentEstimate::from_accumulator(&acc, budget.seed).scaled(u * u))
    }

    /// Bridge estimates of `E D_{k+1}^4` on `k_grid` and the log-log slope.
    ///
    /// Each grid point uses its own stream derived from `budget.seed`.
    pub fn d4_increment(&self, k_grid: &[usize], budget: McBudget) -> Result<D4Report> {
        let mut points = Vec::with_capacity(k_grid.len());
        for (i, &k) in k_grid.iter().enumerate() {
            let b = McBudget::new(budget.samples, crate::rng::stream_seed(budget.seed, i as u64));
            points.push((k, self.d4_bridge(k, b)?));
        }
        let usable: Vec<(f64, f64, f64)> = points
            .iter()
            .filter(|(k, e)| *k > 0 && e.value > 0.0)
            .map(|(k, e)| (*k as f64, e.value, e.stderr))
            .collect();
        if usable.len() < 3 {
            return Err(crate::error::Error::Numerical(format!(
                "slope fit needs at least 3 positive estimates, got {}",
                usable.len()
            )));
        }
        let fit = loglog_slope(&usable)?;
        Ok(D4Report { points, fit })
    }
}

/// Environment averages of `(W_{k+1} - W_k)^4` and of its conditional
/// expectation `(gamma4 - 3 gamma2) sum_x W_k(x)^4 + 3 gamma2 I_k^2`.
pub fn d4_environment(
    base: &EnvFieldSpec,
    dim: usize,
    k: usize,
    cumulants: &CumulantSet<f64>,
    count: u64,
    master: u64,
) -> Result<(MomentEstimate, MomentEstimate)> {
    let opts = SweepOptions::new(dim, k + 1).exact();
    let rows = run_ensemble(base, master, count, |env| {
        let (trace, _) = evolve_profile::<f64>(env, &opts)?;
        let dk = trace.w[k + 1] - trace.w[k];
        Ok((dk.powi(4), trace.conditional_fourth_moment(k, cumulants)))
    })?;
    let raw: Accumulator = rows.iter().map(|r| r.0).collect();
    let cond: Accumulator = rows.iter().map(|r| r.1).collect();
    Ok((
        MomentEstimate::from_accumulator(&raw, master),
        MomentEstimate::from_accumulator(&cond, master),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::{cumulants, EnvLaw};
    use crate::green::{GreenTable, QuadratureSpec};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn table() -> &'static GreenTable {
        static T: OnceLock<GreenTable> = OnceLock::new();
        T.get_or_init(|| GreenTable::build(3, 4, &QuadratureSpec::default()).unwrap())
    }

    fn ctx(beta: f64) -> ReplicaContext<'static> {
        ReplicaContext::new(table(), cumulants(&EnvLaw::GaussianStandard, beta).unwrap()).unwrap()
    }

    #[test]
    fn fourth_moment_small_cases() {
        let c = ctx(0.2);
        assert_relative_eq!(c.fourth_moment_exact(1).unwrap().value, c.cumulants.lambda4().exp(), epsilon = 1e-14);
        assert_relative_eq!(ctx(0.0).fourth_moment_exact(2).unwrap().value, 1.0, epsilon = 1e-14);
        assert_eq!(ctx(0.0).fourth_moment_mc(5, McBudget::new(1000, 1)).value, 1.0);
        assert!(c.fourth_moment_exact(3).is_err());
    }

    #[test]
    fn increment_small_cases() {
        let c = ctx(0.2);
        assert_eq!(c.d4_exact(0).unwrap().value, c.cumulants.gamma4);
        // k = 1: all four walks sit at the origin at time 0
        let e4 = c.cumulants.lambda4().exp();
        let p_four = 1.0 / 216.0;
        let p_22 = 3.0 * (5.0 / 216.0);
        let want = e4 * (c.cumulants.gamma4 * p_four + c.cumulants.gamma2 * p_22);
        assert_relative_eq!(c.d4_exact(1).unwrap().value, want, max_relative = 1e-13);
        let z = ctx(0.0);
        assert_eq!(z.d4_exact(2).unwrap().value, 0.0);
        assert_eq!(z.d4_bridge(5, McBudget::new(100, 1)).unwrap().value, 0.0);
        assert!(z.d4_increment(&[2, 4, 8], McBudget::new(100, 1)).is_err());
    }

    #[test]
    fn bridge_matches_exact_and_plain() {
        let c = ctx(0.3);
        for k in 1..=2 {
            let ex = c.d4_exact(k).unwrap();
            let br = c.d4_bridge(k, McBudget::new(200_000, 3)).unwrap();
            assert!(br.z_score(&ex) < 3.0, "k = {k}: {br:?} vs {ex:?}");
        }
        let k = 4;
        let plain = c.d4_quad_mc(k, McBudget::new(1_000_000, 4));
        let br = c.d4_bridge(k, McBudget::new(200_000, 5)).unwrap();
        assert!(br.z_score(&plain) < 3.0, "{br:?} vs {plain:?}");
        assert!(br.stderr < plain.stderr);
    }

    #[test]
    fn quad_mc_matches_exact() {
        let c = ctx(0.2);
        let ex = c.fourth_moment_exact(2).unwrap();
        let mc = c.fourth_moment_mc(2, McBudget::new(500_000, 9));
        assert!(mc.z_score(&ex) < 3.0, "{mc:?} vs {ex:?}");
    }
}
