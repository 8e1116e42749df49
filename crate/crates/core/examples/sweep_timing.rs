//! Times the transfer sweep for a few horizons.

use std::time::Instant;

use polylab_core::env_model::{EnvFieldSpec, EnvLaw};
use polylab_core::partition_engine::{evolve_profile, SweepOptions, Truncation};

fn main() {
    for &(k, tail) in &[(64usize, 1e-9), (64, 1e-5), (144, 1e-9), (144, 1e-5), (512, 1e-5)] {
        let opts = SweepOptions::new(3, k).with_truncation(Truncation::Gaussian { tail });
        let reps = if k > 200 { 1 } else { 20 };
        let start = Instant::now();
        let mut acc = 0.0;
        for s in 0..reps {
            let env = EnvFieldSpec::new(EnvLaw::GaussianStandard, std::env::var("BETA").map(|b| b.parse().unwrap()).unwrap_or(0.2), s);
            let (t, _) = evolve_profile::<f64>(&env, &opts).unwrap();
            acc += t.w[k];
        }
        let dt = start.elapsed().as_secs_f64() / reps as f64;
        println!("K = {k:4} tail = {tail:e}: {:.4} s per environment (mean W = {:.4})", dt, acc / reps as f64);
    }
}
