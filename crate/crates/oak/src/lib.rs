//! Orthogonal additive kernel Gaussian-process regression.
//!
//! Features get per-feature base kernels constrained to integrate to zero
//! against their input measures, making the additive decomposition
//! identifiable: it is exactly the functional ANOVA decomposition of the
//! model. Interactions of every order are composed in polynomial time with
//! the Newton-Girard recurrence, hyperparameters are learned by MAP with a
//! Gamma prior on the order variances, and each component's share of the
//! predictive variance is an analytic Sobol index used to rank and truncate
//! the decomposition. Continuous features can be pre-warped toward a standard
//! Gaussian with a per-feature normalizing flow.
//!
//! The `oak` binary drives the pipeline over CSV data; see the `cli` module.

pub mod cli;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod measures;
pub mod opt;
pub mod quad;
pub mod sobol;

pub use error::{OakError, Result};
pub use gp::{fit, FeatureSpec, FitConfig, FittedModel};
pub use kernels::compose::OakHyperparams;
pub use sobol::{build_report, SobolReport};
