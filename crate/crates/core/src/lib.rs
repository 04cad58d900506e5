//! Bayes-optimal prediction regions with exact frequentist coverage.
//!
//! The crate builds "frequentist and Bayes" (FAB) prediction regions: regions
//! that keep a constant `1 - α` coverage for every parameter value while
//! minimizing expected volume under a prior. Implemented models:
//!
//! - [`normal`]: `X ~ N_p(θ, kΣ)`, `Y ~ N_p(θ, Σ)` with a conjugate normal prior,
//!   known or estimated `Σ`;
//! - [`regression`]: prediction of `Y ~ N(vᵀβ, σ²)` from `X ~ N_n(Uβ, σ²I)`;
//! - [`conformal`]: nonparametric prediction with the posterior predictive
//!   density as conformity score.
//!
//! [`sim`] estimates coverage and risk by seeded Monte Carlo and generates
//! the figure tables; [`cli`] exposes everything on the command line.

pub mod cli;
pub mod conformal;
pub mod error;
pub mod normal;
pub mod np;
pub mod region;
pub mod regression;
pub mod rng;
pub mod sim;
pub mod specfun;

pub use error::{FabError, Result};
pub use region::{invert_membership, invert_membership_with, solve_critical_q, CriticalCdf, InversionOptions, RegionResult};
