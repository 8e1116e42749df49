//! Two-replica functionals: `E W_n^2`, `||W - W_n||_2^2`, `E s_n^2` and
//! spatial covariances.
//!
//! Each quantity has up to three routes: exact enumeration of the pair law
//! (`n <= 6`), renewal series (numerically exact for any `n`), and Monte
//! Carlo over the difference walk `Y = S - S~`.

use super::{McBudget, ReplicaContext};
use crate::env_model::{EnvFieldSpec, MAX_DIM};
use crate::error::{domain, Result};
use crate::estimate::{Accumulator, MomentEstimate};
use crate::lattice_rw::{
    enumerate_pair_exact, first_hit_series, first_return_series, intersection_exp_at_meeting,
    intersection_exp_moments, pair_functional_mc, return_series, shifted_exp_moment, transition_series,
    DiffWalk, MAX_PAIR_HORIZON,
};
use crate::par::{mc_mean, DEFAULT_TASK_SIZE};
use crate::partition_engine::{evolve_profile, run_ensemble, SweepOptions};

impl ReplicaContext<'_> {
    fn renewal_inputs(&self, n: usize) -> Result<Vec<f64>> {
        let u = return_series(self.dim(), n.max(1))?;
        Ok(first_return_series(&u))
    }

    /// `E W_n^2 = P[e^{lambda2 N_n}]` from the exact pair law.
    pub fn second_moment_exact(&self, n: usize) -> Result<MomentEstimate> {
        let table = enumerate_pair_exact::<f64>(n, self.dim())?;
        Ok(MomentEstimate::exact(table.weighted(self.cumulants.lambda2, |_| 1.0)))
    }

    /// `E W_n^2` from the renewal recursion.
    pub fn second_moment_renewal(&self, n: usize) -> Result<MomentEstimate> {
        let f = self.renewal_inputs(n)?;
        let a = intersection_exp_moments(self.cumulants.lambda2, &f, n);
        Ok(MomentEstimate::exact(a[n]))
    }

    pub fn second_moment_mc(&self, n: usize, budget: McBudget) -> MomentEstimate {
        pair_functional_mc(self.dim(), n, self.cumulants.lambda2, |_| 1.0, budget.samples, budget.seed)
    }

    /// Exact enumeration for `n <= 6`, Monte Carlo beyond.
    pub fn second_moment(&self, n: usize, budget: McBudget) -> Result<MomentEstimate> {
        if n == 0 {
            return domain("second moment needs n >= 1");
        }
        if n <= MAX_PAIR_HORIZON {
            self.second_moment_exact(n)
        } else {
            Ok(self.second_moment_mc(n, budget))
        }
    }

    /// `||W - W_n||_2^2 = Var(W) P[e^{lambda2 N_n} G(Y_n) / G(0)]` from the
    /// exact pair law.
    pub fn l2_distance_exact(&self, n: usize) -> Result<MomentEstimate> {
        let table = enumerate_pair_exact::<f64>(n, self.dim())?;
        let g = self.green;
        let v = table.weighted(self.cumulants.lambda2, |z| g.hitting(z.coords()));
        Ok(MomentEstimate::exact(self.theory.var_w * v))
    }

    /// `||W - W_n||_2^2 = E W^2 - E W_n^2` from the renewal recursion.
    pub fn l2_distance_renewal(&self, n: usize) -> Result<MomentEstimate> {
        let w2n = self.second_moment_renewal(n)?.value;
        Ok(MomentEstimate::exact(self.theory.e_w2 - w2n))
    }

    pub fn l2_distance_mc(&self, n: usize, budget: McBudget) -> MomentEstimate {
        let g = self.green;
        let d = self.dim();
        pair_functional_mc(d, n, self.cumulants.lambda2, |z| g.hitting(&z[..d]), budget.samples, budget.seed)
            .scaled(self.theory.var_w)
    }

    /// Exact enumeration for `n <= 6`, Monte Carlo beyond.
    pub fn l2_distance(&self, n: usize, budget: McBudget) -> Result<MomentEstimate> {
        if n == 0 {
            return domain("L2 distance needs n >= 1");
        }
        if n <= MAX_PAIR_HORIZON {
            self.l2_distance_exact(n)
        } else {
            Ok(self.l2_distance_mc(n, budget))
        }
    }

    /// `E (W_{rn} - W_n)^2 = ||W - W_n||^2 - ||W - W_{rn}||^2`, each term by
    /// [`Self::l2_distance`] with independent streams.
    pub fn window_increment(&self, n: usize, r: usize, budget: McBudget) -> Result<MomentEstimate> {
        if r < 2 {
            return domain(format!("window ratio must be at least 2, got {r}"));
        }
        let a = self.l2_distance(n, budget)?;
        let b = self.l2_distance(r * n, McBudget::new(budget.samples, budget.seed ^ 0x5bd1_e995))?;
        Ok(MomentEstimate {
            value: a.value - b.value,
            stderr: a.combined_stderr(&b),
            count: a.count.max(b.count),
            method: if a.stderr > 0.0 { a.method } else { b.method },
            seed: b.seed.or(a.seed),
        })
    }

    /// `E s_n^2 = n^{(d-2)/2} sum_{k >= n} kappa2 P[e^{lambda2 N_k} 1{Y_k = 0}]`.
    ///
    /// The sum is simulated up to `M = 4n`; the remainder is
    /// `P[e^{lambda2 N_M} F(Y_M)]` with `F(x) = Var(W) G(x) / G(0)`.
    pub fn expected_condvar(&self, n: usize, budget: McBudget) -> Result<MomentEstimate> {
        self.expected_condvar_with_tail(n, 4 * n, budget)
    }

    pub fn expected_condvar_with_tail(&self, n: usize, m: usize, budget: McBudget) -> Result<MomentEstimate> {
        if n == 0 || m < n {
            return domain(format!("conditional variance needs 1 <= n <= M, got n = {n}, M = {m}"));
        }
        let d = self.dim();
        let (l2, k2, var_w) = (self.cumulants.lambda2, self.cumulants.kappa2, self.theory.var_w);
        let g = self.green;
        let acc = mc_mean(budget.seed, budget.samples, DEFAULT_TASK_SIZE, |rng| {
            let mut w = DiffWalk::new(d);
            let visits = w.run(n, rng);
            let mut weight = (l2 * visits as f64).exp();
            let e = l2.exp();
            let mut sum = 0.0;
            for _ in n..m {
                if w.at_origin() {
                    sum += k2 * weight;
                    weight *= e;
                }
                w.step(rng);
            }
            sum + weight * var_w * g.hitting(&w.pos[..d])
        });
        Ok(MomentEstimate::from_accumulator(&acc, budget.seed).scaled(self.diffusive_scale(n)))
    }

    /// `kappa2 P[e^{lambda2 N_k} 1{Y_k = 0}]`, the environment average of
    /// `E_k D_{k+1}^2`, for `k = 0..=n`.
    pub fn condvar_terms(&self, n: usize) -> Result<Vec<f64>> {
        let f = self.renewal_inputs(n)?;
        let v = intersection_exp_at_meeting(self.cumulants.lambda2, &f, n);
        Ok(v.into_iter().map(|x| self.cumulants.kappa2 * x).collect())
    }

    /// Exact `E s_n^2(K) = n^{(d-2)/2} sum_{k=n}^{K-1} kappa2 P[e^{lambda2 N_k} 1{Y_k = 0}]`.
    pub fn expected_condvar_truncated(&self, n: usize, big_k: usize) -> Result<MomentEstimate> {
        if n >= big_k {
            return domain(format!("truncated conditional variance needs n < K, got {n} >= {big_k}"));
        }
        let terms = self.condvar_terms(big_k)?;
        let s: f64 = terms[n..big_k].iter().sum();
        Ok(MomentEstimate::exact(self.diffusive_scale(n) * s))
    }

    /// `Cov(W, W o theta_x) = Var(W) G(x) / G(0)`.
    pub fn covariance_shift(&self, x: &[i32]) -> Result<MomentEstimate> {
        if x.len() != self.dim() {
            return domain(format!("shift has dimension {}, expected {}", x.len(), self.dim()));
        }
        Ok(MomentEstimate::closed_form(self.theory.var_w * self.green.hitting(x)))
    }

    /// `Cov(W_K, W_K o theta_x) = P_{0,x}[e^{lambda2 N_K}] - 1` from the
    /// renewal recursion.
    pub fn covariance_shift_finite(&self, x: &[i32], big_k: usize) -> Result<MomentEstimate> {
        if x.len() != self.dim() {
            return domain(format!("shift has dimension {}, expected {}", x.len(), self.dim()));
        }
        if x.iter().map(|c| c.abs()).sum::<i32>() % 2 == 1 {
            return Ok(MomentEstimate::exact(0.0));
        }
        let u = return_series(self.dim(), big_k.max(1))?;
        let f = first_return_series(&u);
        let a = intersection_exp_moments(self.cumulants.lambda2, &f, big_k);
        let ux = transition_series(x, big_k.max(1))?;
        let h = first_hit_series(&ux, &u);
        Ok(MomentEstimate::exact(shifted_exp_moment(&h, &a, big_k) - 1.0))
    }
}

/// `E[(W_K - 1)(W_K o theta_x - 1)]` over `count` environments, each swept
/// twice on the shared field.
pub fn covariance_shift_env(
    base: &EnvFieldSpec,
    dim: usize,
    x: &[i32],
    big_k: usize,
    count: u64,
    master: u64,
) -> Result<MomentEstimate> {
    if x.len() != dim || dim > MAX_DIM {
        return domain(format!("shift has dimension {}, expected {dim}", x.len()));
    }
    let opts = SweepOptions::new(dim, big_k);
    let products = run_ensemble(base, master, count, |env| {
        let (a, _) = evolve_profile::<f64>(env, &opts)?;
        let (b, _) = evolve_profile::<f64>(&env.shifted(0, x), &opts)?;
        Ok((a.w[big_k] - 1.0) * (b.w[big_k] - 1.0))
    })?;
    let acc: Accumulator = products.into_iter().collect();
    Ok(MomentEstimate::from_accumulator(&acc, master))
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
        T.get_or_init(|| GreenTable::build(3, 12, &QuadratureSpec::default()).unwrap())
    }

    fn ctx(beta: f64) -> ReplicaContext<'static> {
        ReplicaContext::new(table(), cumulants(&EnvLaw::GaussianStandard, beta).unwrap()).unwrap()
    }

    #[test]
    fn small_horizon_values() {
        let c = ctx(0.2);
        let e = 0.04f64.exp();
        assert_relative_eq!(c.second_moment_exact(1).unwrap().value, e, epsilon = 1e-14);
        let two = e * (5.0 / 6.0 + e / 6.0);
        assert_relative_eq!(c.second_moment_exact(2).unwrap().value, two, epsilon = 1e-14);
        assert_relative_eq!(two, 1.047_891, epsilon = 1e-6);
        for n in 1..=6 {
            let ex = c.second_moment_exact(n).unwrap().value;
            let rn = c.second_moment_renewal(n).unwrap().value;
            assert_relative_eq!(ex, rn, max_relative = 1e-13);
        }
    }

    #[test]
    fn l2_exact_and_renewal_agree() {
        // both are exact up to the Green table tolerance
        let c = ctx(0.2);
        for n in 1..=6 {
            let ex = c.l2_distance_exact(n).unwrap().value;
            let rn = c.l2_distance_renewal(n).unwrap().value;
            assert_relative_eq!(ex, rn, max_relative = 1e-7);
        }
        // n = 1: Y_1 is a neighbour-of-neighbour step
        let t = &c.theory;
        let g = table();
        let mut s = 0.0;
        for (z, w) in crate::lattice_rw::difference_kernel(3) {
            s += w as f64 / 36.0 * g.hitting(&z[..3]);
        }
        assert_relative_eq!(
            c.l2_distance_exact(1).unwrap().value,
            t.var_w * 0.04f64.exp() * s,
            max_relative = 1e-13
        );
    }

    #[test]
    fn zero_disorder_vanishes() {
        let c = ctx(0.0);
        let b = McBudget::new(1000, 1);
        assert_eq!(c.second_moment_mc(10, b).value, 1.0);
        assert_eq!(c.second_moment_mc(10, b).stderr, 0.0);
        assert_eq!(c.l2_distance_mc(10, b).value, 0.0);
        assert_eq!(c.expected_condvar(5, b).unwrap().value, 0.0);
        assert_eq!(c.covariance_shift(&[0, 0, 0]).unwrap().value, 0.0);
    }

    #[test]
    fn covariance_shift_closed_form_and_finite() {
        let c = ctx(0.2);
        assert_relative_eq!(c.covariance_shift(&[0, 0, 0]).unwrap().value, c.theory.var_w, epsilon = 1e-15);
        assert_eq!(c.covariance_shift(&[1, 0, 0]).unwrap().value, 0.0);
        assert_eq!(c.covariance_shift_finite(&[1, 0, 0], 50).unwrap().value, 0.0);
        let at_origin = c.covariance_shift_finite(&[0, 0, 0], 40).unwrap().value;
        assert_relative_eq!(at_origin, c.second_moment_renewal(40).unwrap().value - 1.0, max_relative = 1e-12);
        // finite-K covariance increases to the limit
        let x = [2, 0, 0];
        let lim = c.covariance_shift(&x).unwrap().value;
        let mut gaps = Vec::new();
        for k in [32, 128, 512] {
            let v = c.covariance_shift_finite(&x, k).unwrap().value;
            assert!(v > 0.0 && v < lim, "{k}: {v} vs {lim}");
            gaps.push(lim - v);
        }
        // the gap decays like K^{-(d-2)/2}
        for w in gaps.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 0.3, "{gaps:?}");
        }
    }

    #[test]
    fn condvar_truncated_sums_terms() {
        let c = ctx(0.2);
        let terms = c.condvar_terms(20).unwrap();
        assert_relative_eq!(terms[0], c.cumulants.kappa2, epsilon = 1e-15);
        assert_relative_eq!(terms[1], c.cumulants.kappa2 * 0.04f64.exp() / 6.0, max_relative = 1e-13);
        let s = c.expected_condvar_truncated(4, 20).unwrap().value;
        assert_relative_eq!(s, 2.0 * terms[4..20].iter().sum::<f64>(), max_relative = 1e-14);
        assert!(c.expected_condvar_truncated(4, 4).is_err());
    }

    #[test]
    fn monte_carlo_routes_agree_with_exact() {
        let c = ctx(0.2);
        for n in [2, 4] {
            let b = McBudget::new(400_000, 10 + n as u64);
            let mc = c.second_moment_mc(n, b);
            let ex = c.second_moment_exact(n).unwrap();
            assert!(mc.z_score(&ex) < 3.0, "n = {n}: {mc:?} vs {ex:?}");
            let mc = c.l2_distance_mc(n, b);
            let ex = c.l2_distance_exact(n).unwrap();
            assert!(mc.z_score(&ex) < 3.0, "n = {n}: {mc:?} vs {ex:?}");
        }
    }

    #[test]
    fn condvar_estimator_matches_renewal() {
        // with the tail closed by F, E s_n^2 equals n^{(d-2)/2} ||W - W_n||^2
        let c = ctx(0.2);
        let n = 8;
        let est = c.expected_condvar(n, McBudget::new(200_000, 5)).unwrap();
        let exact = c.l2_distance_renewal(n).unwrap().scaled(c.diffusive_scale(n));
        assert!(est.z_score(&exact) < 3.0, "{est:?} vs {exact:?}");
    }
}
