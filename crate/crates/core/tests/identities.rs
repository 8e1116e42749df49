//! Cross-module identities between environment sweeps and replica estimators.

use std::sync::OnceLock;

use polylab_core::env_model::{cumulants, EnvFieldSpec, EnvLaw};
use polylab_core::green::{GreenTable, QuadratureSpec};
use polylab_core::partition_engine::{evolve_profile, overlap_path_pair_mc, run_ensemble, SweepOptions};
use polylab_core::replica_estimators::{covariance_shift_env, d4_environment, McBudget, ReplicaContext};
use polylab_core::{Accumulator, MomentEstimate};

fn green() -> &'static GreenTable {
    static G: OnceLock<GreenTable> = OnceLock::new();
    G.get_or_init(|| GreenTable::build(3, 16, &QuadratureSpec::default()).unwrap())
}

fn ctx(law: EnvLaw, beta: f64) -> ReplicaContext<'static> {
    ReplicaContext::new(green(), cumulants(&law, beta).unwrap()).unwrap()
}

fn within(a: &MomentEstimate, b: &MomentEstimate, k: f64) -> bool {
    (a.value - b.value).abs() <= k * a.combined_stderr(b) + 1e-12 * b.value.abs()
}

#[test]
fn martingale_has_unit_mean() {
    for law in [EnvLaw::GaussianStandard, EnvLaw::Rademacher, EnvLaw::Bernoulli { p: 0.3 }] {
        let base = EnvFieldSpec::new(law, 0.3, 0);
        let opts = SweepOptions::new(3, 8).exact();
        let w = run_ensemble(&base, 11, 4000, |env| Ok(evolve_profile::<f64>(env, &opts)?.0.w)).unwrap();
        for k in [1, 4, 8] {
            let acc: Accumulator = w.iter().map(|x| x[k]).collect();
            assert!((acc.mean - 1.0).abs() < 4.0 * acc.stderr(), "{law:?} k = {k}: {} +- {}", acc.mean, acc.stderr());
        }
    }
}

#[test]
fn second_moment_routes_agree() {
    let c = ctx(EnvLaw::Rademacher, 0.3);
    let base = EnvFieldSpec::new(EnvLaw::Rademacher, 0.3, 0);
    let opts = SweepOptions::new(3, 4).exact();
    let w = run_ensemble(&base, 12, 20_000, |env| Ok(evolve_profile::<f64>(env, &opts)?.0.w)).unwrap();
    for n in 1..=4 {
        let exact = c.second_moment_exact(n).unwrap();
        let renewal = c.second_moment_renewal(n).unwrap();
        let mc = c.second_moment_mc(n, McBudget::new(200_000, 13 + n as u64));
        let env = MomentEstimate::from_accumulator(&w.iter().map(|x| x[n] * x[n]).collect(), 12);
        assert!((exact.value - renewal.value).abs() < 1e-12, "n = {n}");
        assert!(within(&mc, &exact, 4.0), "pair MC n = {n}: {mc:?} vs {exact:?}");
        assert!(within(&env, &exact, 4.0), "environments n = {n}: {env:?} vs {exact:?}");
    }
}

#[test]
fn fourth_moment_routes_agree() {
    let c = ctx(EnvLaw::GaussianStandard, 0.2);
    for n in 1..=2 {
        let exact = c.fourth_moment_exact(n).unwrap();
        let mc = c.fourth_moment_mc(n, McBudget::new(400_000, 20 + n as u64));
        assert!(within(&mc, &exact, 4.0), "n = {n}: {mc:?} vs {exact:?}");
    }
}

#[test]
fn shifted_covariance_matches_environments() {
    let c = ctx(EnvLaw::GaussianStandard, 0.3);
    let base = EnvFieldSpec::new(EnvLaw::GaussianStandard, 0.3, 0);
    for x in [[0, 0, 0], [1, 1, 0], [2, 0, 0]] {
        let exact = c.covariance_shift_finite(&x, 6).unwrap();
        let env = covariance_shift_env(&base, 3, &x, 6, 20_000, 30).unwrap();
        assert!(within(&env, &exact, 4.0), "x = {x:?}: {env:?} vs {exact:?}");
    }
    assert_eq!(c.covariance_shift_finite(&[1, 0, 0], 6).unwrap().value, 0.0);
}

#[test]
fn fourth_increment_matches_environments() {
    let law = EnvLaw::Rademacher;
    let c = ctx(law, 0.3);
    let base = EnvFieldSpec::new(law, 0.3, 0);
    for k in 0..=2 {
        let exact = c.d4_exact(k).unwrap();
        let (raw, conditional) = d4_environment(&base, 3, k, &c.cumulants, 20_000, 40 + k as u64).unwrap();
        assert!(within(&raw, &exact, 4.0), "k = {k}: {raw:?} vs {exact:?}");
        assert!(within(&conditional, &exact, 4.0), "k = {k}: {conditional:?} vs {exact:?}");
    }
}

#[test]
fn overlap_matches_path_pairs_in_one_environment() {
    let env = EnvFieldSpec::new(EnvLaw::GaussianStandard, 0.4, 77);
    let kappa2 = cumulants(&env.law, env.beta).unwrap().kappa2;
    let (trace, _) = evolve_profile::<f64>(&env, &SweepOptions::new(3, 10).exact()).unwrap();
    for k in [1, 5, 10] {
        let mc = overlap_path_pair_mc(&env, 3, k, kappa2, 400_000, 50 + k as u64).unwrap();
        let exact = kappa2 * trace.overlap[k];
        assert!((mc.value - exact).abs() < 4.0 * mc.stderr, "k = {k}: {mc:?} vs {exact}");
    }
}

#[test]
fn second_moment_approaches_its_limit() {
    let c = ctx(EnvLaw::GaussianStandard, 0.2);
    let limit = c.theory.e_w2;
    let mut previous = 1.0;
    for n in [16, 64, 256, 1024] {
        let v = c.second_moment_renewal(n).unwrap().value;
        assert!(v > previous && v < limit, "n = {n}: {v}");
        let gap = c.l2_distance_renewal(n).unwrap().value;
        assert!((limit - v - gap).abs() < 1e-12, "n = {n}");
        previous = v;
    }
    assert!(((limit - previous) * 32.0 / c.theory.sigma2 - 1.0).abs() < 0.01);
}
