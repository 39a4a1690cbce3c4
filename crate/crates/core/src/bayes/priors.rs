use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, StandardNormal};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::datagen::Dataset;
use crate::error::{invalid, Result};
use crate::ols::residual_variance;
use crate::spatial::AdjacencyStructure;

use super::McmcState;

/// Hyperparameters of the prior system.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Prior variance of intercepts, exposure and covariate coefficients.
    pub sigma2_prior: f64,
    /// Prior variance of the neighborhood-confounder coefficient.
    pub sigma2_prior_ubar: f64,
    pub alpha_y: f64,
    pub beta_y: f64,
    /// Variance of the (untruncated) normal whose positive half is the prior on `1 / tau_u`.
    pub tau_u_scale: f64,
    pub tau_z_center: f64,
    pub tau_z_sd: f64,
    pub tau_z_lower: f64,
    pub tau_z_upper: f64,
    pub phi_u_beta: (f64, f64),
    /// Median degree of the graph behind `G` and `H`.
    pub d: f64,
    /// Residual variance of the outcome on exposures and covariates.
    pub sigma2_tilde_y: f64,
    /// Residual variance of the exposure on covariates.
    pub sigma2_tilde_z: f64,
    /// Sample variance of the exposure.
    pub s2_tilde_z: f64,
}

impl PriorConfig {
    /// Assembles the prior from the three data summaries and the median degree.
    pub fn from_summaries(
        sigma2_tilde_y: f64,
        sigma2_tilde_z: f64,
        s2_tilde_z: f64,
        d: f64,
    ) -> Result<Self> {
        if !(d > 0.0) {
            return Err(invalid(format!("median degree must be positive, got {d}")));
        }
        if !(sigma2_tilde_z > 0.0 && s2_tilde_z > 0.0) {
            return Err(invalid("exposure has no residual variation"));
        }
        if !(sigma2_tilde_y > 0.0) {
            log::warn!("outcome residual variance is {sigma2_tilde_y}; the residual-variance prior is degenerate");
        }
        let sigma2_prior = 2.0;
        Ok(Self {
            sigma2_prior,
            sigma2_prior_ubar: 0.35 * 0.35,
            alpha_y: 3.0,
            beta_y: 3.0 * sigma2_tilde_y / 4.0,
            tau_u_scale: d * sigma2_prior / 2.0,
            tau_z_center: (d * sigma2_tilde_z / 2.0).sqrt(),
            tau_z_sd: 1.0,
            tau_z_lower: (d * 0.01 * s2_tilde_z).sqrt(),
            tau_z_upper: (d * sigma2_tilde_z / 0.8).sqrt(),
            phi_u_beta: (6.0, 6.0),
            d,
            sigma2_tilde_y,
            sigma2_tilde_z,
            s2_tilde_z,
        })
    }

    /// `P(sigma_y^2 < sigma2_tilde_y)` under the inverse-gamma prior.
    pub fn prob_sigma2_below_tilde(&self) -> f64 {
        // sigma^2 < s  <=>  1/sigma^2 > 1/s, with 1/sigma^2 ~ Gamma(alpha, rate beta)
        let g = GammaDist::new(self.alpha_y, self.beta_y).expect("valid gamma parameters");
        1.0 - g.cdf(1.0 / self.sigma2_tilde_y)
    }

    /// Mean of `1 / tau_u` under its half-normal prior.
    pub fn inv_tau_u_mean(&self) -> f64 {
        (self.tau_u_scale * 2.0 / std::f64::consts::PI).sqrt()
    }

    pub(crate) fn log_prior_tau_u(&self, tau: f64) -> f64 {
        -1.0 / (2.0 * self.tau_u_scale * tau * tau) - 2.0 * tau.ln()
    }

    pub(crate) fn tau_z_in_support(&self, tau: f64) -> bool {
        let inv = 1.0 / tau;
        tau > 0.0 && inv >= self.tau_z_lower && inv <= self.tau_z_upper
    }

    pub(crate) fn log_prior_tau_z(&self, tau: f64) -> f64 {
        if !self.tau_z_in_support(tau) {
            return f64::NEG_INFINITY;
        }
        let dev = (1.0 / tau - self.tau_z_center) / self.tau_z_sd;
        -0.5 * dev * dev - 2.0 * tau.ln()
    }

    pub(crate) fn log_prior_phi_u(&self, phi: f64) -> f64 {
        if !(phi > 0.0 && phi < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.phi_u_beta.0 - 1.0) * phi.ln() + (self.phi_u_beta.1 - 1.0) * (1.0 - phi).ln()
    }

    /// Log prior of the five covariance hyperparameters, up to a constant;
    /// `-inf` outside the support (including `phi_u >= phi_z`).
    pub(crate) fn log_prior_hyper(&self, h: [f64; 5]) -> f64 {
        let [tau_u, tau_z, phi_u, phi_z, rho] = h;
        if !(tau_u > 0.0) || !(phi_z.abs() < 1.0) || !(rho.abs() < 1.0) || !(phi_u < phi_z) {
            return f64::NEG_INFINITY;
        }
        self.log_prior_tau_u(tau_u) + self.log_prior_tau_z(tau_z) + self.log_prior_phi_u(phi_u)
    }

    /// Log prior of every non-hyper parameter, up to a constant.
    pub(crate) fn log_prior_coefficients(&self, s: &McmcState) -> f64 {
        let sq = |v: f64| v * v;
        let normal: f64 = [s.beta0, s.beta_z, s.beta_zbar, s.gamma0]
            .iter()
            .chain(&s.beta_c)
            .chain(&s.gamma_c)
            .map(|&v| sq(v))
            .sum::<f64>()
            / (2.0 * self.sigma2_prior);
        let ubar = sq(s.beta_ubar) / (2.0 * self.sigma2_prior_ubar);
        let sigma = -(self.alpha_y + 1.0) * s.sigma_y2.ln() - self.beta_y / s.sigma_y2;
        sigma - normal - ubar
    }

    /// Draws a parameter vector from the prior; `pd` decides whether a
    /// `(phi_u, phi_z, rho)` triple gives a positive definite joint precision.
    pub fn sample_state<R: Rng + ?Sized>(
        &self,
        p: usize,
        n: usize,
        pd: impl Fn(f64, f64, f64) -> bool,
        rng: &mut R,
    ) -> McmcState {
        let coef = Normal::new(0.0, self.sigma2_prior.sqrt()).unwrap();
        let mut draw = || coef.sample(rng);
        let beta0 = draw();
        let beta_z = draw();
        let beta_zbar = draw();
        let beta_c: Vec<f64> = (0..p).map(|_| draw()).collect();
        let gamma0 = draw();
        let gamma_c: Vec<f64> = (0..p).map(|_| draw()).collect();
        let beta_ubar = self.sigma2_prior_ubar.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let precision: f64 = Gamma::new(self.alpha_y, 1.0 / self.beta_y)
            .unwrap()
            .sample(rng);
        let inv_tau_u = (self.tau_u_scale.sqrt() * rng.sample::<f64, _>(StandardNormal)).abs();
        let inv_tau_z = loop {
            let v = self.tau_z_center + self.tau_z_sd * rng.sample::<f64, _>(StandardNormal);
            if v >= self.tau_z_lower && v <= self.tau_z_upper {
                break v;
            }
        };
        let beta = Beta::new(self.phi_u_beta.0, self.phi_u_beta.1).unwrap();
        let (phi_u, phi_z, rho) = loop {
            let phi_u: f64 = beta.sample(rng);
            let phi_z: f64 = rng.random_range(-1.0..1.0);
            let rho: f64 = rng.random_range(-1.0..1.0);
            if phi_u < phi_z && pd(phi_u, phi_z, rho) {
                break (phi_u, phi_z, rho);
            }
        };
        McmcState {
            beta0,
            beta_z,
            beta_zbar,
            beta_ubar,
            beta_c,
            gamma0,
            gamma_c,
            sigma_y2: 1.0 / precision,
            tau_u: 1.0 / inv_tau_u,
            tau_z: 1.0 / inv_tau_z,
            phi_u,
            phi_z,
            rho,
            u: DVector::zeros(n),
        }
    }
}

fn sample_variance(v: &DVector<f64>) -> f64 {
    let n = v.len() as f64;
    let m = v.mean();
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

/// Data-driven prior: outcome residual variance from a regression on
/// `(Z, Zbar, C)`, exposure residual variance from `Z` on `C`, the sample
/// variance of `Z`, and the median degree of `gh` (the graph behind `G`, `H`).
pub fn default_priors(dataset: &Dataset, gh: &AdjacencyStructure) -> Result<PriorConfig> {
    let p = dataset.p();
    if dataset.n() < p + 4 {
        return Err(crate::error::Error::InsufficientData {
            n: dataset.n(),
            k: p + 4,
        });
    }
    let cov: Vec<(String, DVector<f64>)> = (0..p)
        .map(|j| (format!("c{}", j + 1), dataset.c.column(j).into_owned()))
        .collect();
    let mut y_cols: Vec<(&str, &DVector<f64>)> = vec![("z", &dataset.z), ("zbar", &dataset.zbar)];
    y_cols.extend(cov.iter().map(|(n, v)| (n.as_str(), v)));
    let z_cols: Vec<(&str, &DVector<f64>)> = cov.iter().map(|(n, v)| (n.as_str(), v)).collect();
    let sigma2_tilde_y = residual_variance(&dataset.y, &y_cols)?;
    let sigma2_tilde_z = if p == 0 {
        sample_variance(&dataset.z)
    } else {
        residual_variance(&dataset.z, &z_cols)?
    };
    PriorConfig::from_summaries(
        sigma2_tilde_y,
        sigma2_tilde_z,
        sample_variance(&dataset.z),
        gh.median_degree(),
    )
}
