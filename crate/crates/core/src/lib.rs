//! Spatial causal inference under unmeasured spatial confounding and
//! interference.
//!
//! The crate covers the whole pipeline: adjacency structures and CAR-style
//! precisions ([`spatial`]), latent-root causal graphs with d-separation
//! ([`scenario`]), synthetic data under the confounding/interference
//! scenarios ([`datagen`]), potential-outcome estimands ([`estimands`]),
//! least-squares baselines ([`ols`]), a Metropolis-within-Gibbs sampler for
//! the joint confounder/exposure/outcome model ([`bayes`]) and a replication
//! harness ([`harness`]).

pub mod bayes;
pub mod datagen;
pub mod error;
pub mod estimands;
pub mod harness;
pub mod linalg;
pub mod ols;
pub mod scenario;
pub mod spatial;

pub use error::{Error, Result};
