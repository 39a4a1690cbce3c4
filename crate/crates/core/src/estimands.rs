//! Local and interference estimands from potential-outcome definitions under
//! the linear structural model, plus the paired-data contrasts that identify
//! them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::datagen::{Dataset, ScenarioConfig};
use crate::error::{invalid, Result};
use crate::ols::{fit_ols, DesignMatrix};
use crate::spatial::AdjacencyStructure;

/// Largest degree for which neighbor assignments are enumerated exactly.
pub const MAX_ENUMERATION_DEGREE: usize = 10;

/// Mean potential outcome for own exposure `z` and neighborhood exposure `zbar`.
pub fn po_mean(config: &ScenarioConfig, z: f64, zbar: f64, c: &[f64], u: f64, ubar: f64) -> f64 {
    let cb: f64 = c.iter().zip(&config.beta_c).map(|(a, b)| a * b).sum();
    config.beta0
        + config.beta_z * z
        + config.beta_zbar * zbar
        + cb
        + config.beta_u * u
        + config.beta_ubar * ubar
}

/// What the neighbor's treatment is held at when an effect is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditioningLevel {
    Fixed0,
    Fixed1,
    Mixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectPair {
    pub local: f64,
    pub interference: f64,
    pub level: ConditioningLevel,
}

/// Unit-level effects in a pair, obtained by differencing potential-outcome
/// means (neighbor at 0 for the local effect, own at 0 for interference).
pub fn pair_effects(config: &ScenarioConfig) -> EffectPair {
    pair_effects_at(config, 0.0, &vec![0.0; config.beta_c.len()], 0.0, 0.0)
}

/// As [`pair_effects`], evaluated at an arbitrary reference level and unit
/// covariates. Under the linear model the result does not depend on them.
pub fn pair_effects_at(
    config: &ScenarioConfig,
    level: f64,
    c: &[f64],
    u: f64,
    ubar: f64,
) -> EffectPair {
    let local = po_mean(config, 1.0, level, c, u, ubar) - po_mean(config, 0.0, level, c, u, ubar);
    let interference =
        po_mean(config, level, 1.0, c, u, ubar) - po_mean(config, level, 0.0, c, u, ubar);
    EffectPair {
        local,
        interference,
        level: if level == 0.0 {
            ConditioningLevel::Fixed0
        } else if level == 1.0 {
            ConditioningLevel::Fixed1
        } else {
            ConditioningLevel::Mixed(level)
        },
    }
}

/// `pi * lambda1 + (1 - pi) * lambda0`.
pub fn lambda_mix(lambda0: f64, lambda1: f64, pi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(invalid(format!("pi must lie in [0, 1], got {pi}")));
    }
    Ok(pi * lambda1 + (1.0 - pi) * lambda0)
}

fn check_policy(
    adj: &AdjacencyStructure,
    c: &DMatrix<f64>,
    u: &DVector<f64>,
    pis: &[f64],
) -> Result<DVector<f64>> {
    if c.nrows() != adj.n() || u.len() != adj.n() {
        return Err(invalid(
            "covariates and confounder must have one row per unit",
        ));
    }
    for &p in pis {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!(
                "treatment probability must lie in [0, 1], got {p}"
            )));
        }
    }
    adj.neighbor_average(u)
}

/// Per-unit `lambda_i(pi) = E[Ybar_i(1, pi) - Ybar_i(0, pi)]` with neighbors
/// treated independently with probability `pi`, by Monte Carlo.
pub fn network_local_effect<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    adj: &AdjacencyStructure,
    c: &DMatrix<f64>,
    u: &DVector<f64>,
    pi: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let ubar = check_policy(adj, c, u, &[pi])?;
    if n_draws == 0 {
        return Err(invalid("n_draws must be positive"));
    }
    let mut out = DVector::zeros(adj.n());
    for i in 0..adj.n() {
        let ci: Vec<f64> = c.row(i).iter().copied().collect();
        let d = adj.degree(i) as f64;
        let mut acc = 0.0;
        for _ in 0..n_draws {
            let treated = (0..adj.degree(i))
                .filter(|_| rng.random::<f64>() < pi)
                .count();
            let zbar = treated as f64 / d;
            acc += po_mean(config, 1.0, zbar, &ci, u[i], ubar[i])
                - po_mean(config, 0.0, zbar, &ci, u[i], ubar[i]);
        }
        out[i] = acc / n_draws as f64;
    }
    Ok(out)
}

/// Per-unit `iota_i(pi, pi'; z) = E[Ybar_i(z, pi') - Ybar_i(z, pi)]` by
/// Monte Carlo. Both policies share the same uniforms, so `pi' = pi` gives
/// exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn network_interference_effect<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    adj: &AdjacencyStructure,
    c: &DMatrix<f64>,
    u: &DVector<f64>,
    z: f64,
    pi: f64,
    pi_prime: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let ubar = check_policy(adj, c, u, &[pi, pi_prime])?;
    if z != 0.0 && z != 1.0 {
        return Err(invalid(format!("own treatment must be 0 or 1, got {z}")));
    }
    if n_draws == 0 {
        return Err(invalid("n_draws must be positive"));
    }
    let mut out = DVector::zeros(adj.n());
    for i in 0..adj.n() {
        let ci: Vec<f64> = c.row(i).iter().copied().collect();
        let d = adj.degree(i) as f64;
        let mut acc = 0.0;
        for _ in 0..n_draws {
            let (mut a, mut b) = (0usize, 0usize);
            for _ in 0..adj.degree(i) {
                let v: f64 = rng.random();
                a += usize::from(v < pi);
                b += usize::from(v < pi_prime);
            }
            acc += po_mean(config, z, b as f64 / d, &ci, u[i], ubar[i])
                - po_mean(config, z, a as f64 / d, &ci, u[i], ubar[i]);
        }
        out[i] = acc / n_draws as f64;
    }
    Ok(out)
}

/// Expectation of `f(number treated)` over `Binomial(d, pi)` by summing all
/// `2^d` assignments.
fn enumerate_assignments(d: usize, pi: f64, f: impl Fn(usize) -> f64) -> f64 {
    (0u32..1 << d)
        .map(|mask| {
            let k = mask.count_ones() as usize;
            pi.powi(k as i32) * (1.0 - pi).powi((d - k) as i32) * f(k)
        })
        .sum()
}

fn check_degree(adj: &AdjacencyStructure) -> Result<()> {
    if adj.max_degree() > MAX_ENUMERATION_DEGREE {
        return Err(invalid(format!(
            "exact enumeration needs degree <= {MAX_ENUMERATION_DEGREE}, graph has {}",
            adj.max_degree()
        )));
    }
    Ok(())
}

/// [`network_local_effect`] by exhaustive enumeration of neighbor assignments.
pub fn network_local_effect_exact(
    config: &ScenarioConfig,
    adj: &AdjacencyStructure,
    c: &DMatrix<f64>,
    u: &DVector<f64>,
    pi: f64,
) -> Result<DVector<f64>> {
    let ubar = check_policy(adj, c, u, &[pi])?;
    check_degree(adj)?;
    Ok(DVector::from_fn(adj.n(), |i, _| {
        let ci: Vec<f64> = c.row(i).iter().copied().collect();
        let d = adj.degree(i);
        enumerate_assignments(d, pi, |k| {
            let zbar = k as f64 / d as f64;
            po_mean(config, 1.0, zbar, &ci, u[i], ubar[i])
                - po_mean(config, 0.0, zbar, &ci, u[i], ubar[i])
        })
    }))
}

/// [`network_interference_effect`] by exhaustive enumeration.
pub fn network_interference_effect_exact(
    config: &ScenarioConfig,
    adj: &AdjacencyStructure,
    c: &DMatrix<f64>,
    u: &DVector<f64>,
    z: f64,
    pi: f64,
    pi_prime: f64,
) -> Result<DVector<f64>> {
    let ubar = check_policy(adj, c, u, &[pi, pi_prime])?;
    check_degree(adj)?;
    Ok(DVector::from_fn(adj.n(), |i, _| {
        let ci: Vec<f64> = c.row(i).iter().copied().collect();
        let d = adj.degree(i);
        let mean_under = |p: f64| {
            enumerate_assignments(d, p, |k| {
                po_mean(config, z, k as f64 / d as f64, &ci, u[i], ubar[i])
            })
        };
        mean_under(pi_prime) - mean_under(pi)
    }))
}

/// Which member of each pair splits the blocks in [`unit1_contrast`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitBy {
    Own,
    Neighbor,
}

/// Difference of average first-unit outcomes between blocks where the
/// chosen unit is treated and blocks where it is not. Units `2k` and
/// `2k + 1` form pair `k`.
pub fn unit1_contrast(dataset: &Dataset, split: SplitBy) -> Result<f64> {
    let n_pairs = dataset.n() / 2;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for k in 0..n_pairs {
        let treated = match split {
            SplitBy::Own => dataset.z[2 * k],
            SplitBy::Neighbor => dataset.z[2 * k + 1],
        } > 0.5;
        if treated {
            s1 += dataset.y[2 * k];
            n1 += 1;
        } else {
            s0 += dataset.y[2 * k];
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(invalid("both treatment arms must be non-empty"));
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

/// `E_U1[E(Y1 | Z1 = 1, U1) - E(Y1 | Z1 = 0, U1)]`, with both conditional
/// means modelled by a regression of `Y1` on a cubic in `U1` interacted with
/// `Z1`, averaged over the empirical distribution of `U1`.
pub fn stratified_local_contrast(dataset: &Dataset) -> Result<f64> {
    let u = dataset
        .u
        .as_ref()
        .ok_or_else(|| crate::error::Error::MissingColumn("u".into()))?;
    let n_pairs = dataset.n() / 2;
    let y1 = DVector::from_fn(n_pairs, |k, _| dataset.y[2 * k]);
    let z1 = DVector::from_fn(n_pairs, |k, _| dataset.z[2 * k]);
    let powers: Vec<DVector<f64>> = (1..=3)
        .map(|p| DVector::from_fn(n_pairs, |k, _| u[2 * k].powi(p)))
        .collect();
    let inter: Vec<DVector<f64>> = powers.iter().map(|v| v.component_mul(&z1)).collect();
    let design = DesignMatrix::with_intercept(&[
        ("z1", &z1),
        ("u", &powers[0]),
        ("u2", &powers[1]),
        ("u3", &powers[2]),
        ("z1_u", &inter[0]),
        ("z1_u2", &inter[1]),
        ("z1_u3", &inter[2]),
    ])?;
    let fit = fit_ols(&y1, &design)?;
    let coef = |name: &str| fit.coef(name).unwrap_or(0.0);
    Ok(coef("z1")
        + coef("z1_u") * powers[0].mean()
        + coef("z1_u2") * powers[1].mean()
        + coef("z1_u3") * powers[2].mean())
}

/// Monte Carlo value of `E_U1[lambda_1(pi(U1); U1)]` in the paired binary
/// design, where `pi(u) = P(Z2 = 1 | U1 = u)` and
/// `lambda_1(z; u) = E[Y1(1, z) - Y1(0, z) | U1 = u]`.
///
/// Each outer draw of `U1` uses `inner` draws of `(U2, eps2)` for both the
/// neighbor's treatment probability and the conditional mean contrast.
pub fn conditional_local_effect_mc<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    outer: usize,
    inner: usize,
    rng: &mut R,
) -> Result<f64> {
    if outer == 0 || inner == 0 {
        return Err(invalid("draw counts must be positive"));
    }
    let su = (1.0 - config.phi_u * config.phi_u).sqrt();
    let mut total = 0.0;
    for _ in 0..outer {
        let u1: f64 = StandardNormal.sample(rng);
        let (mut pi, mut lam0, mut lam1) = (0.0, 0.0, 0.0);
        for _ in 0..inner {
            let w: f64 = StandardNormal.sample(rng);
            let u2 = config.phi_u * u1 + su * w;
            let e2: f64 = StandardNormal.sample(rng);
            pi += 1.0 / (1.0 + (-(config.beta_uz * u2 + e2)).exp());
            let contrast = |z2: f64| {
                po_mean(config, 1.0, z2, &[], u1, u2) - po_mean(config, 0.0, z2, &[], u1, u2)
            };
            lam0 += contrast(0.0);
            lam1 += contrast(1.0);
        }
        let m = inner as f64;
        total += lambda_mix(lam0 / m, lam1 / m, pi / m)?;
    }
    Ok(total / outer as f64)
}
