//! Distance-dependent Chinese Restaurant Process clustering.
//!
//! The crate provides the ddCRP prior over observation links, an exact
//! collapsed Gibbs sampler for conjugate cluster models, a reversible-jump
//! sampler for non-conjugate ones, hyperparameter updates for the
//! concentration and decay scale, posterior predictive simulation, chain
//! diagnostics, and a configuration-driven experiment harness.
//!
//! Observations are indexed from zero throughout.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod chain;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod hyper;
pub mod math;
pub mod model;
pub mod partition;
pub mod predictive;
pub mod prior;
pub mod proposals;
pub mod rjmcmc;
pub mod trace;

pub use error::{Error, Result};
pub use model::{ClusterModel, ClusterStats, GammaShape, Model, Observations, PoissonGamma};
pub use partition::{Assignments, MoveClass, Partition};
pub use prior::{DdcrpPrior, Decay, DistanceMatrix};
