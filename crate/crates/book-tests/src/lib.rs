//! The guide's chapters, compiled so that `cargo test --doc` runs every
//! code listing in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/estimands.md")]
pub mod estimands {}
#[doc = include_str!("../../../book/src/ols.md")]
pub mod ols {}
#[doc = include_str!("../../../book/src/bayes.md")]
pub mod bayes {}
#[doc = include_str!("../../../book/src/simulations.md")]
pub mod simulations {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
