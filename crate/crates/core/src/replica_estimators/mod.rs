//! Environment averages reduced to functionals of independent walks:
//! moments of `W_n`, the `L^2` distance to the limit, the conditional
//! variance, fourth-moment quantities and the lemma diagnostics.

pub mod bridge;
pub mod lemmas;
pub mod pair;
pub mod quad;
pub mod theory;

use serde::{Deserialize, Serialize};

pub use bridge::ClosedWalkSampler;
pub use lemmas::{LemmaConfig, LemmaReport};
pub use pair::covariance_shift_env;
pub use quad::{d4_environment, D4Report};
pub use theory::{theory_constants, TheoryConstants};

use crate::env_model::{l2_region_check, CumulantSet};
use crate::error::{domain, Result};
use crate::green::GreenTable;

/// Sample count and master seed of a Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McBudget {
    pub samples: u64,
    pub seed: u64,
}

impl McBudget {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self { samples, seed }
    }
}

/// Shared inputs of the replica estimators.
#[derive(Clone, Debug)]
pub struct ReplicaContext<'a> {
    pub cumulants: CumulantSet<f64>,
    pub green: &'a GreenTable,
    pub theory: TheoryConstants<f64>,
}

impl<'a> ReplicaContext<'a> {
    /// Fails outside the `L^2` region.
    pub fn new(green: &'a GreenTable, cumulants: CumulantSet<f64>) -> Result<Self> {
        let region = l2_region_check(&cumulants, green.pi_d())?;
        if !region.inside {
            return domain(format!(
                "lambda2 = {} is outside the L2 region (margin {})",
                cumulants.lambda2, region.margin
            ));
        }
        let theory = theory_constants(green.dim(), &cumulants, green.pi_d())?;
        Ok(Self { cumulants, green, theory })
    }

    pub fn dim(&self) -> usize {
        self.green.dim()
    }

    /// `n^{(d-2)/2}`.
    pub fn diffusive_scale(&self, n: usize) -> f64 {
        (n as f64).powf((self.dim() as f64 - 2.0) / 2.0)
    }
}
