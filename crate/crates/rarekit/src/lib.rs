//! Simulation and numerical-verification toolkit for multivariate
//! heavy-tailed models: polyhedral rare sets with their scalar
//! reduction, univariate tail families with class diagnostics, discrete
//! spectral-measure vector models, FGM-coupled scale mixtures, a
//! time-dependent compound Poisson risk model with discounting, and
//! lower-bound ratio scans for precise large deviations. Every
//! stochastic routine draws from seeded, splittable streams so results
//! replay bit-exactly.

pub mod error;
pub mod estimate;
pub mod large_deviations;
pub mod mixtures;
pub mod quad;
pub mod rare_sets;
pub mod risk_model;
pub mod rng;
pub mod scenario;
pub mod tails;
pub mod vectors;

pub use error::{Error, Result};
pub use estimate::EstimateCI;
pub use rare_sets::{ruin_set_to_rare_set, RareSet, RuinSet, RuinSetKind};
pub use rng::{McRunner, RngFactory};
pub use tails::{class_profile, matuszewska_estimate, ClassProfile, TailModel};
pub use vectors::{Ray, VectorModel};
