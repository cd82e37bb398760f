//! Bayesian estimation of strategic network formation models from aggregate
//! relational data (ARD).
//!
//! The latent network and the utility parameters are sampled jointly by a
//! Metropolis–Hastings chain in which the intractable normalizing constant of
//! the network law is replaced by its mean-field approximation, and exact
//! ARD matching is relaxed to a tolerance that adapts to the acceptance rate.
//!
//! Module map:
//!
//! * [`model`]: networks, covariates, utilities and the potential function.
//! * [`dynamics`]: Glauber sampling from the stationary network law.
//! * [`meanfield`]: the mean-field lower bound on `log c(X; theta)`.
//! * [`oracle`]: exhaustive enumeration for small networks (`n <= 5`).
//! * [`ard`]: the survey-question DSL and ARD distances.
//! * [`sampler`]: the joint (theta, g) Metropolis–Hastings chain.
//! * [`experiment`]: covariate I/O, presets and simulation studies.
//! * [`validate`]: cross-module checks against the exhaustive oracle.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ard;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod meanfield;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod sampler;
pub mod validate;

pub use error::{Error, Result};
pub use model::{BoundModel, CovariateTable, Network, PairFeature, Part, Payoffs, Theta, UtilityModel};
