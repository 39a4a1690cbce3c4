use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::ols::{fit_ols, DesignMatrix};

use super::diagnostics::{posterior_summary, split_rhat, PosteriorSummary};
use super::{McmcState, Model};

/// Names of the Metropolis-updated hyperparameters, in update order.
pub const HYPER_NAMES: [&str; 5] = ["tau_u", "tau_z", "phi_u", "phi_z", "rho"];

/// Split-R-hat threshold below which a fit counts as converged.
pub const RHAT_GATE: f64 = 1.02;

const TARGET_ACCEPTANCE: f64 = 0.35;
const ADAPT_EXPONENT: f64 = 0.6;

/// Random-walk step sizes on the transformed hyperparameters, with
/// acceptance bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub steps: [f64; 5],
    /// Robbins-Monro adaptation of `steps`; switch off after burn-in.
    pub adapt: bool,
    sweeps: u64,
    pub proposed: [u64; 5],
    pub accepted: [u64; 5],
    /// Proposals outside the support or with a non-positive-definite precision.
    pub rejected_invalid: u64,
}

impl Tuning {
    pub fn new(steps: [f64; 5], adapt: bool) -> Self {
        Self {
            steps,
            adapt,
            sweeps: 0,
            proposed: [0; 5],
            accepted: [0; 5],
            rejected_invalid: 0,
        }
    }

    pub fn reset_counts(&mut self) {
        self.proposed = [0; 5];
        self.accepted = [0; 5];
        self.rejected_invalid = 0;
    }

    pub fn acceptance_rates(&self) -> [f64; 5] {
        std::array::from_fn(|k| {
            if self.proposed[k] == 0 {
                0.0
            } else {
                self.accepted[k] as f64 / self.proposed[k] as f64
            }
        })
    }
}

impl Default for Tuning {
    fn default() -> Self {
        Self::new([0.3, 0.3, 0.5, 0.5, 0.3], true)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained coordinate of hyperparameter `k` given the others.
fn to_unconstrained(k: usize, h: &[f64; 5]) -> f64 {
    match k {
        0 | 1 => h[k].ln(),
        2 => logit(h[2] / h[3]),
        3 => logit((h[3] + 1.0) / 2.0),
        _ => h[4].atanh(),
    }
}

fn from_unconstrained(k: usize, eta: f64, h: &[f64; 5]) -> f64 {
    match k {
        0 | 1 => eta.exp(),
        2 => h[3] * logistic(eta),
        3 => 2.0 * logistic(eta) - 1.0,
        _ => eta.tanh(),
    }
}

/// `log |d h_k / d eta|`.
fn log_jacobian(k: usize, h: &[f64; 5]) -> f64 {
    match k {
        0 | 1 => h[k].ln(),
        2 => h[2].ln() + (1.0 - h[2] / h[3]).ln(),
        3 => (1.0 + h[3]).ln() + (1.0 - h[3]).ln() - std::f64::consts::LN_2,
        _ => (1.0 - h[4] * h[4]).ln(),
    }
}

/// One sweep: Gibbs updates of the coefficients, residual variance,
/// exposure-mean coefficients and latent confounder, a joint Gibbs update of
/// the confounder with the coefficients it trades off against, then one
/// random-walk Metropolis update per hyperparameter.
pub fn mcmc_step<R: Rng + ?Sized>(
    model: &Model,
    state: &McmcState,
    tuning: &mut Tuning,
    rng: &mut R,
) -> Result<McmcState> {
    let mut s = state.clone();
    model.sample_beta(&mut s, rng)?;
    model.sample_sigma2(&mut s, rng)?;
    model.sample_gamma(&mut s, rng)?;
    model.sample_latent(&mut s, rng)?;
    model.sample_joint(&mut s, rng)?;

    let w = model.exposure_residual(&s);
    let stats = model.car_stats(&s.u, &w);
    let mut h = s.hyper();
    let mut current = model.hyper_target(h, &stats);
    tuning.sweeps += 1;
    let rate = (tuning.sweeps as f64).powf(-ADAPT_EXPONENT);
    for k in 0..5 {
        if tuning.steps[k] == 0.0 {
            continue;
        }
        let eta = to_unconstrained(k, &h);
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let mut proposal = h;
        proposal[k] = from_unconstrained(k, eta + tuning.steps[k] * z, &h);
        let target = model.hyper_target(proposal, &stats);
        tuning.proposed[k] += 1;
        let log_alpha = if target.is_finite() && proposal[k].is_finite() {
            target + log_jacobian(k, &proposal) - current - log_jacobian(k, &h)
        } else {
            tuning.rejected_invalid += 1;
            f64::NEG_INFINITY
        };
        let log_u = rng.random::<f64>().ln();
        if log_u < log_alpha {
            h = proposal;
            current = target;
            tuning.accepted[k] += 1;
        }
        if tuning.adapt {
            let accept_prob = log_alpha.min(0.0).exp();
            tuning.steps[k] *= (rate * (accept_prob - TARGET_ACCEPTANCE)).exp();
        }
    }
    s.set_hyper(h);
    Ok(s)
}

/// Run length and storage settings of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainSettings {
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            n_iter: 25_000,
            n_burnin: 7_000,
            thin: 60,
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.n_burnin {
            return Err(invalid(format!(
                "n_iter ({}) must exceed n_burnin ({})",
                self.n_iter, self.n_burnin
            )));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        Ok(())
    }

    pub fn n_draws(&self) -> usize {
        (self.n_iter - self.n_burnin) / self.thin
    }
}

/// Stored post-burn-in, thinned states of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub draws: Vec<McmcState>,
    /// Post-burn-in acceptance rate of each hyperparameter, in [`HYPER_NAMES`] order.
    pub acceptance_rates: [f64; 5],
    pub seed: u64,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub rejected_invalid: u64,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws of one scalar parameter, or `None` for an unknown name.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        self.draws.iter().map(|s| s.get(name)).collect()
    }
}

/// Seed of chain `index` derived from a base seed with splitmix64.
pub fn derive_chain_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Starting state: OLS coefficients and residual variance, hyperparameters
/// at prior centers, `U = 0`, all jittered by the chain's random stream.
pub(crate) fn initial_state<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Result<McmcState> {
    let d = model.data();
    let pr = model.priors();
    let p = model.p();
    let cov: Vec<(String, DVector<f64>)> = (0..p)
        .map(|j| (format!("c{}", j + 1), d.c.column(j).into_owned()))
        .collect();
    let mut y_cols: Vec<(&str, &DVector<f64>)> = vec![("z", &d.z), ("zbar", &d.zbar)];
    y_cols.extend(cov.iter().map(|(n, v)| (n.as_str(), v)));
    let y_fit = fit_ols(&d.y, &DesignMatrix::with_intercept(&y_cols)?)?;
    let gamma: Vec<f64> = if p == 0 {
        vec![d.z.mean()]
    } else {
        let z_cols: Vec<(&str, &DVector<f64>)> = cov.iter().map(|(n, v)| (n.as_str(), v)).collect();
        fit_ols(&d.z, &DesignMatrix::with_intercept(&z_cols)?)?
            .coefficients
            .iter()
            .copied()
            .collect()
    };
    let b = &y_fit.coefficients;
    let sd = pr.sigma2_prior.sqrt();
    let mut jitter = |scale: f64| scale * rng.random_range(-1.0..1.0);
    let beta_c = (0..p).map(|j| b[3 + j] + jitter(sd)).collect();
    let gamma_c = (0..p).map(|j| gamma[1 + j] + jitter(sd)).collect();
    let mut s = McmcState {
        beta0: b[0] + jitter(sd),
        beta_z: b[1] + jitter(sd),
        beta_zbar: b[2] + jitter(sd),
        beta_ubar: jitter(pr.sigma2_prior_ubar.sqrt()),
        beta_c,
        gamma0: gamma[0] + jitter(sd),
        gamma_c,
        sigma_y2: pr.sigma2_tilde_y.max(1e-12),
        tau_u: 1.0 / pr.inv_tau_u_mean() * jitter(0.25).exp(),
        tau_z: 1.0,
        phi_u: 0.0,
        phi_z: 0.0,
        rho: 0.0,
        u: DVector::zeros(model.n()),
    };
    loop {
        let inv_tau_z = pr.tau_z_center * jitter(0.25).exp();
        s.tau_z = 1.0 / inv_tau_z.clamp(pr.tau_z_lower, pr.tau_z_upper);
        s.phi_u = 0.3 + jitter(0.1);
        s.phi_z = 0.5 + jitter(0.1);
        s.rho = jitter(0.1);
        if model
            .spectrum()
            .is_positive_definite(s.phi_u, s.phi_z, s.rho)
        {
            return Ok(s);
        }
    }
}

/// Runs one chain: adaptation during burn-in, then fixed steps and thinned storage.
pub fn run_chain(model: &Model, settings: &ChainSettings, seed: u64) -> Result<PosteriorChain> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial_state(model, &mut rng)?;
    let mut tuning = Tuning::default();
    for _ in 0..settings.n_burnin {
        state = mcmc_step(model, &state, &mut tuning, &mut rng)?;
    }
    tuning.adapt = false;
    tuning.reset_counts();
    let mut draws = Vec::with_capacity(settings.n_draws());
    for t in 1..=settings.n_iter - settings.n_burnin {
        state = mcmc_step(model, &state, &mut tuning, &mut rng)?;
        if t % settings.thin == 0 {
            draws.push(state.clone());
        }
    }
    Ok(PosteriorChain {
        draws,
        acceptance_rates: tuning.acceptance_rates(),
        seed,
        n_iter: settings.n_iter,
        n_burnin: settings.n_burnin,
        thin: settings.thin,
        rejected_invalid: tuning.rejected_invalid,
    })
}

/// Several chains with their convergence check on the exposure coefficients.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub chains: Vec<PosteriorChain>,
    pub rhat_beta_z: f64,
    pub rhat_beta_zbar: f64,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.rhat_beta_z < RHAT_GATE && self.rhat_beta_zbar < RHAT_GATE
    }

    pub fn summary(&self, param: &str) -> Result<PosteriorSummary> {
        posterior_summary(&self.chains, param)
    }

    pub fn rhat(&self, param: &str) -> Result<f64> {
        split_rhat(&self.chains, param)
    }
}

/// Runs `n_chains` chains with seeds derived from `seed`. A degenerate
/// chain counts as not converged (`R-hat = inf`).
pub fn fit_chains(
    model: &Model,
    settings: &ChainSettings,
    n_chains: usize,
    seed: u64,
) -> Result<FitResult> {
    if n_chains == 0 {
        return Err(invalid("need at least one chain"));
    }
    let chains = (0..n_chains as u64)
        .map(|k| run_chain(model, settings, derive_chain_seed(seed, k)))
        .collect::<Result<Vec<_>>>()?;
    let gate = |name| split_rhat(&chains, name).unwrap_or(f64::INFINITY);
    let rhat_beta_z = gate("beta_z");
    let rhat_beta_zbar = gate("beta_zbar");
    Ok(FitResult {
        chains,
        rhat_beta_z,
        rhat_beta_zbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::model::tests::{random_state, small_model};

    #[test]
    fn transforms_invert() {
        let h = [0.7, 1.3, 0.2, 0.6, -0.4];
        for k in 0..5 {
            let eta = to_unconstrained(k, &h);
            assert!((from_unconstrained(k, eta, &h) - h[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let h = [0.7, 1.3, 0.2, 0.6, -0.4];
        for k in 0..5 {
            let eta = to_unconstrained(k, &h);
            let e = 1e-6;
            let deriv = (from_unconstrained(k, eta + e, &h) - from_unconstrained(k, eta - e, &h))
                / (2.0 * e);
            assert!((deriv.ln() - log_jacobian(k, &h)).abs() < 1e-6, "k = {k}");
        }
    }

    #[test]
    fn zero_steps_freeze_hyperparameters() {
        let m = small_model(20, 1, false);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_state(&m, &mut rng);
        let mut tuning = Tuning::new([0.0; 5], true);
        let t = mcmc_step(&m, &s, &mut tuning, &mut rng).unwrap();
        assert_eq!(t.hyper(), s.hyper());
        assert_eq!(tuning.steps, [0.0; 5]);
        assert_ne!(t.beta_z, s.beta_z);
        assert_ne!(t.u, s.u);
        assert_ne!(t.gamma0, s.gamma0);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let m = small_model(20, 3, false);
        let settings = ChainSettings {
            n_iter: 300,
            n_burnin: 100,
            thin: 10,
        };
        let a = run_chain(&m, &settings, 99).unwrap();
        let b = run_chain(&m, &settings, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        let c = run_chain(&m, &settings, 100).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn stored_states_are_valid() {
        let m = small_model(30, 4, false);
        let settings = ChainSettings {
            n_iter: 600,
            n_burnin: 200,
            thin: 5,
        };
        let chain = run_chain(&m, &settings, 5).unwrap();
        for s in &chain.draws {
            m.validate_state(s).unwrap();
            assert_eq!(s.beta_u(), 1.0);
        }
    }

    #[test]
    fn bad_settings_are_rejected() {
        let m = small_model(10, 6, false);
        let s = ChainSettings {
            n_iter: 10,
            n_burnin: 10,
            thin: 1,
        };
        assert!(run_chain(&m, &s, 1).is_err());
        let s = ChainSettings {
            n_iter: 20,
            n_burnin: 10,
            thin: 0,
        };
        assert!(run_chain(&m, &s, 1).is_err());
    }

    #[test]
    fn chain_seeds_differ() {
        let seeds: Vec<u64> = (0..4).map(|k| derive_chain_seed(7, k)).collect();
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        assert_ne!(derive_chain_seed(7, 0), derive_chain_seed(8, 0));
    }
}
