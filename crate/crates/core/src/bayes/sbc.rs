//! Simulation-based calibration: parameters drawn from a frozen prior,
//! data drawn from the model at those parameters, and the posterior
//! intervals checked for their nominal coverage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datagen::{
    generate_covariates, generate_network_dataset, sample_joint_uz, sample_outcome, Dataset,
    ScenarioConfig,
};
use crate::error::Result;
use crate::scenario::Scenario;
use crate::spatial::AdjacencyStructure;

use super::diagnostics::PosteriorSummary;
use super::sampler::derive_chain_seed;
use super::{default_priors, run_chain, ChainSettings, McmcState, Model, ModelData};

#[derive(Debug, Clone)]
pub struct SbcSettings {
    pub n_units: usize,
    pub n_covariates: usize,
    pub n_replicates: usize,
    /// Mass of the equal-tailed credible interval.
    pub level: f64,
    pub chain: ChainSettings,
    pub params: Vec<String>,
}

impl Default for SbcSettings {
    fn default() -> Self {
        Self {
            n_units: 100,
            n_covariates: 4,
            n_replicates: 50,
            level: 0.9,
            chain: ChainSettings {
                n_iter: 6_000,
                n_burnin: 2_000,
                thin: 10,
            },
            params: vec!["beta_z".into(), "beta_zbar".into()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SbcReport {
    pub params: Vec<String>,
    /// Fraction of replicates whose interval contains the drawn value, per parameter.
    pub coverage: Vec<f64>,
    /// Rank of the drawn value among the posterior draws, per parameter and replicate.
    pub ranks: Vec<Vec<usize>>,
    pub n_draws: usize,
}

/// Data-generating configuration matching a parameter state.
pub fn config_from_state(s: &McmcState) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::network(Scenario::F);
    cfg.beta0 = s.beta0;
    cfg.beta_z = s.beta_z;
    cfg.beta_zbar = s.beta_zbar;
    cfg.beta_u = 1.0;
    cfg.beta_ubar = s.beta_ubar;
    cfg.beta_c = s.beta_c.clone();
    cfg.gamma0 = s.gamma0;
    cfg.gamma_c = s.gamma_c.clone();
    cfg.sigma_y2 = s.sigma_y2;
    cfg.tau_u2 = s.tau_u * s.tau_u;
    cfg.tau_z2 = s.tau_z * s.tau_z;
    cfg.phi_u = s.phi_u;
    cfg.phi_z = s.phi_z;
    cfg.rho = s.rho;
    cfg
}

/// Runs the calibration on a line graph. The prior is built once from a
/// scenario-2f reference dataset and then held fixed.
pub fn simulation_based_calibration(settings: &SbcSettings, seed: u64) -> Result<SbcReport> {
    let adj = AdjacencyStructure::line(settings.n_units)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = generate_network_dataset(
        &adj,
        &ScenarioConfig::network(Scenario::F),
        settings.n_covariates,
        &mut rng,
    )?;
    let priors = default_priors(&reference, &adj)?;
    let template = Model::new(ModelData::from_dataset(&reference), priors.clone())?;
    let spectrum = template.spectrum().clone();

    let results: Vec<Vec<(bool, usize)>> = (0..settings.n_replicates as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<(bool, usize)>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k + 1);
            let truth = priors.sample_state(
                settings.n_covariates,
                settings.n_units,
                |a, b, r| spectrum.is_positive_definite(a, b, r),
                &mut rng,
            );
            let cfg = config_from_state(&truth);
            let c = generate_covariates(settings.n_units, settings.n_covariates, &mut rng);
            let (u, z) = sample_joint_uz(&adj, &cfg, &c, &mut rng)?;
            let zbar = adj.neighbor_average(&z)?;
            let ubar = adj.neighbor_average(&u)?;
            let y = sample_outcome(&cfg, &z, &zbar, &c, &u, &ubar, &mut rng)?;
            let ds = Dataset::from_observed(adj.clone(), y, z, c)?;
            let model = Model::new(ModelData::from_dataset(&ds), priors.clone())?;
            let chain = run_chain(&model, &settings.chain, derive_chain_seed(seed, k))?;
            settings
                .params
                .iter()
                .map(|name| {
                    let draws = chain.values(name).unwrap_or_default();
                    let value = truth.get(name).unwrap_or(f64::NAN);
                    let summary = PosteriorSummary::with_level(&draws, settings.level)?;
                    let rank = draws.iter().filter(|&&d| d < value).count();
                    Ok((summary.covers(value), rank))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n_rep = results.len() as f64;
    let coverage = (0..settings.params.len())
        .map(|j| results.iter().filter(|r| r[j].0).count() as f64 / n_rep)
        .collect();
    let ranks = (0..settings.params.len())
        .map(|j| results.iter().map(|r| r[j].1).collect())
        .collect();
    Ok(SbcReport {
        params: settings.params.clone(),
        coverage,
        ranks,
        n_draws: settings.chain.n_draws(),
    })
}
