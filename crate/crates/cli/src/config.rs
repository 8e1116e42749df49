//! Experiment configuration: JSON file plus command-line overrides.

use std::fmt;
use std::path::PathBuf;

use polylab_core::env_model::{cumulants, l2_region_check, EnvLaw, MAX_DIM};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Budget tier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    #[default]
    Fast,
    Full,
}

/// Sample counts and ensemble sizes of every experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Walks for the Monte Carlo return frequency.
    pub pi_walks: u64,
    pub pi_horizon: usize,
    /// Draws for the Gaussian inverse moment.
    pub zd_samples: u64,
    /// Pair and quad Monte Carlo draws for route equivalence.
    pub route_samples: u64,
    /// Environments averaged for `E W_n^2`, `n <= 6`.
    pub route_envs: u64,
    /// Environments for the orthogonality identity.
    pub orthogonality_envs: u64,
    /// Pair draws per horizon for the rate law.
    pub rate_samples: u64,
    /// Pair draws for the expected conditional variance.
    pub condvar_samples: u64,
    /// Environments swept to the truncation horizon.
    pub condvar_envs: u64,
    pub condvar_horizon: usize,
    /// `(n, environments)` for the window statistic.
    pub clt_runs: Vec<(usize, u64)>,
    pub lemma_correlation_samples: u64,
    pub lemma_inverse_samples: u64,
    pub lemma_green_samples: u64,
    pub lemma_d4_samples: u64,
    pub gw_replicates: u64,
    /// Budget scale of the determinism re-runs.
    pub determinism_samples: u64,
}

impl Budgets {
    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Fast => Self {
                pi_walks: 4_000_000,
                pi_horizon: 1000,
                zd_samples: 1_000_000,
                route_samples: 1_000_000,
                route_envs: 20_000,
                orthogonality_envs: 1000,
                rate_samples: 2_000_000,
                condvar_samples: 1_000_000,
                condvar_envs: 120,
                condvar_horizon: 512,
                clt_runs: vec![(4, 10_000), (9, 4000)],
                lemma_correlation_samples: 1_000_000,
                lemma_inverse_samples: 1_000_000,
                lemma_green_samples: 100_000,
                lemma_d4_samples: 100_000,
                gw_replicates: 100_000,
                determinism_samples: 200_000,
            },
            Tier::Full => Self {
                pi_walks: 20_000_000,
                pi_horizon: 2000,
                zd_samples: 10_000_000,
                route_samples: 10_000_000,
                route_envs: 100_000,
                orthogonality_envs: 10_000,
                rate_samples: 10_000_000,
                condvar_samples: 10_000_000,
                condvar_envs: 1000,
                condvar_horizon: 512,
                clt_runs: vec![(4, 100_000), (9, 10_000), (16, 500)],
                lemma_correlation_samples: 1_000_000,
                lemma_inverse_samples: 4_000_000,
                lemma_green_samples: 400_000,
                lemma_d4_samples: 400_000,
                gw_replicates: 1_000_000,
                determinism_samples: 1_000_000,
            },
        }
    }
}

impl Default for Budgets {
    fn default() -> Self {
        Self::for_tier(Tier::Fast)
    }
}

/// Everything that determines the numbers an experiment produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tier: Tier,
    pub dim: usize,
    pub law: EnvLaw,
    pub beta: f64,
    /// Disorder strengths of the route-equivalence suite.
    pub route_betas: Vec<f64>,
    /// Half-width of the tabulated Green function.
    pub green_r_max: usize,
    /// Directory for the cached Green table; none disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Gaussian tail mass outside the spatial cut-off of environment sweeps.
    pub sweep_tail: f64,
    /// Window ratio `R`.
    pub window: usize,
    /// Explicit budgets; the tier defaults apply when absent.
    pub budgets: Option<Budgets>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            tier: Tier::Fast,
            dim: 3,
            law: EnvLaw::GaussianStandard,
            beta: 0.2,
            route_betas: vec![0.1, 0.2],
            green_r_max: 32,
            cache_dir: None,
            sweep_tail: 1e-5,
            window: 16,
            budgets: None,
        }
    }
}

/// Invalid configuration fields with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub fields: Vec<(String, String)>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for (field, msg) in &self.fields {
            writeln!(f, "  {field}: {msg}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError {
            fields: vec![(format!("line {} column {}", e.line(), e.column()), e.to_string())],
        })
    }

    pub fn budgets(&self) -> Budgets {
        self.budgets.clone().unwrap_or_else(|| Budgets::for_tier(self.tier))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serialises");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let mut push = |field: &str, msg: String| bad.push((field.to_string(), msg));
        if !(3..=MAX_DIM).contains(&self.dim) {
            push("dim", format!("must lie in 3..={MAX_DIM}, got {}", self.dim));
        }
        if let Err(e) = self.law.validate() {
            push("law", e.to_string());
        }
        if !(self.green_r_max >= 4 && self.green_r_max <= 64) {
            push("green_r_max", format!("must lie in 4..=64, got {}", self.green_r_max));
        }
        if !(self.sweep_tail > 0.0 && self.sweep_tail <= 1e-3) {
            push("sweep_tail", format!("must lie in (0, 1e-3], got {}", self.sweep_tail));
        }
        if self.window < 2 {
            push("window", format!("must be at least 2, got {}", self.window));
        }
        if self.route_betas.is_empty() {
            push("route_betas", "must not be empty".into());
        }
        // 1 / G(0) bounds the L2 region from inside for every dimension >= 3
        let pi_bound = 0.3406;
        for (name, beta) in std::iter::once(("beta", self.beta)).chain(self.route_betas.iter().map(|&b| ("route_betas", b))) {
            if !beta.is_finite() {
                push(name, format!("must be finite, got {beta}"));
                continue;
            }
            match cumulants(&self.law, beta).and_then(|c| l2_region_check(&c, pi_bound)) {
                Ok(r) if r.inside => {}
                Ok(r) => push(name, format!("beta = {beta} lies outside the L2 region (margin {:.4})", r.margin)),
                Err(e) => push(name, e.to_string()),
            }
        }
        let b = self.budgets();
        let counts = [
            ("budgets.pi_walks", b.pi_walks),
            ("budgets.zd_samples", b.zd_samples),
            ("budgets.route_samples", b.route_samples),
            ("budgets.route_envs", b.route_envs),
            ("budgets.orthogonality_envs", b.orthogonality_envs),
            ("budgets.rate_samples", b.rate_samples),
            ("budgets.condvar_samples", b.condvar_samples),
            ("budgets.condvar_envs", b.condvar_envs),
            ("budgets.lemma_correlation_samples", b.lemma_correlation_samples),
            ("budgets.lemma_inverse_samples", b.lemma_inverse_samples),
            ("budgets.lemma_green_samples", b.lemma_green_samples),
            ("budgets.lemma_d4_samples", b.lemma_d4_samples),
            ("budgets.gw_replicates", b.gw_replicates),
            ("budgets.determinism_samples", b.determinism_samples),
        ];
        for (name, v) in counts {
            if v < 2 {
                push(name, format!("must be at least 2, got {v}"));
            }
        }
        if b.pi_horizon < 2 {
            push("budgets.pi_horizon", format!("must be at least 2, got {}", b.pi_horizon));
        }
        if b.condvar_horizon <= 16 {
            push("budgets.condvar_horizon", format!("must exceed 16, got {}", b.condvar_horizon));
        }
        if b.clt_runs.is_empty() || b.clt_runs.iter().any(|&(n, e)| n == 0 || e < 50) {
            push("budgets.clt_runs", "needs at least one (n >= 1, environments >= 50) entry".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { fields: bad })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = ExperimentConfig::from_json(r#"{"beta": 0.1, "budgets": {"rate_samples": 1000}}"#).unwrap();
        assert_eq!(c.beta, 0.1);
        assert_eq!(c.budgets().rate_samples, 1000);
        assert_eq!(c.budgets().gw_replicates, Budgets::default().gw_replicates);
    }

    #[test]
    fn diagnostics_name_every_bad_field() {
        let c = ExperimentConfig { dim: 2, beta: 2.0, sweep_tail: 0.5, ..Default::default() };
        let e = c.validate().unwrap_err();
        let names: Vec<_> = e.fields.iter().map(|f| f.0.as_str()).collect();
        assert_eq!(names, ["dim", "sweep_tail", "beta"]);
        assert!(ExperimentConfig::from_json(r#"{"betta": 0.1}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { seed: a.seed + 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
