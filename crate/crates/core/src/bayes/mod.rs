//! Bayesian model for local and interference effects with a latent spatial
//! confounder, fitted by Metropolis-within-Gibbs.
//!
//! The outcome follows `Y = b0 + bZ Z + bZbar Zbar + U + bUbar Ubar + C bC + e`
//! (the confounder coefficient is fixed at one to pin the scale of `U`), and
//! `(U, Z) | C` is jointly Gaussian with precision `[[G, Q], [Q, H]]`, where
//! `G`, `H` are CAR precisions and `Q` is diagonal.

mod chain_io;
mod diagnostics;
mod model;
mod priors;
mod sampler;
mod sbc;
mod state;

pub use chain_io::{
    read_chain_binary, read_chain_csv, write_chain_binary, write_chain_csv, write_latent_csv,
    CHAIN_FORMAT_VERSION,
};
pub use diagnostics::{
    posterior_summary, quantile_type7, split_rhat, split_rhat_chains, PosteriorSummary,
};
pub use model::{Block, Model, ModelData};
pub use priors::{default_priors, PriorConfig};
pub use sampler::{
    derive_chain_seed, fit_chains, mcmc_step, run_chain, ChainSettings, FitResult, PosteriorChain,
    Tuning, HYPER_NAMES, RHAT_GATE,
};
pub use sbc::{config_from_state, simulation_based_calibration, SbcReport, SbcSettings};
pub use state::McmcState;
