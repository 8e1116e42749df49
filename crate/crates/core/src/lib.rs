//! Numerical laboratory for directed polymers in random environment on
//! `Z^d`, `d >= 3`, in the weak disorder regime.

pub mod env_model;
pub mod error;
pub mod estimate;
pub mod green;
pub mod gw_baseline;
pub mod lattice_rw;
pub mod par;
pub mod partition_engine;
pub mod replica_estimators;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use estimate::{Accumulator, Method, MomentEstimate};

/// Cumulants in double precision.
pub type Cumulants = env_model::CumulantSet<f64>;
/// Exact rational weights for enumeration tables.
pub type Rational = num_rational::BigRational;
/// Pair law in double precision.
pub type PairLaw = lattice_rw::PairLawTable<f64>;
/// Pair law with exact rational probabilities.
pub type ExactPairLaw = lattice_rw::PairLawTable<Rational>;
/// Endpoint profile in double precision.
pub type Profile = partition_engine::EndpointProfile<f64>;
/// Endpoint profile in single precision.
pub type Profile32 = partition_engine::EndpointProfile<f32>;
/// Closed-form limits in double precision.
pub type Theory = replica_estimators::TheoryConstants<f64>;
