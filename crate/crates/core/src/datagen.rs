//! Synthetic data under the confounding/interference scenarios: the paired
//! binary-exposure design and the Gaussian network and pair designs built on
//! the joint confounder/exposure model.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::scenario::Scenario;
use crate::spatial::{AdjacencyStructure, JointPrecisionFactor};

/// Covariate coefficients of the exposure model in the main simulations.
pub const SIMULATION_GAMMA_C: [f64; 4] = [-0.35, -0.64, 0.49, 0.06];
/// Covariate coefficients of the outcome model in the main simulations.
pub const SIMULATION_BETA_C: [f64; 4] = [0.06, 0.85, 0.02, 0.33];

/// How units are connected and how the exposure is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Design {
    /// Pairs of units, binary exposure through a logistic link.
    PairedBinary,
    /// Pairs of units, Gaussian exposure from the joint CAR model.
    PairedGaussian,
    /// A single connected network, Gaussian exposure from the joint CAR model.
    Network,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::PairedBinary => "paired-binary",
            Design::PairedGaussian => "paired-gaussian",
            Design::Network => "network-line",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paired-binary" => Ok(Design::PairedBinary),
            "paired-gaussian" | "pairs" => Ok(Design::PairedGaussian),
            "network-line" | "network" | "line" => Ok(Design::Network),
            other => Err(invalid(format!("unknown design `{other}`"))),
        }
    }
}

/// Parameters of a data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub beta0: f64,
    pub beta_z: f64,
    pub beta_zbar: f64,
    pub beta_u: f64,
    pub beta_ubar: f64,
    pub beta_c: Vec<f64>,
    pub gamma0: f64,
    pub gamma_c: Vec<f64>,
    pub tau_u2: f64,
    pub tau_z2: f64,
    pub phi_u: f64,
    pub phi_z: f64,
    pub rho: f64,
    pub sigma_y2: f64,
    /// Confounder-to-exposure slope inside the logistic link (paired binary design only).
    pub beta_uz: f64,
}

impl ScenarioConfig {
    fn base(scenario: Scenario) -> Self {
        Self {
            scenario,
            beta0: 0.0,
            beta_z: 1.0,
            beta_zbar: 0.8,
            beta_u: 1.0,
            beta_ubar: 0.5,
            beta_c: Vec::new(),
            gamma0: 0.0,
            gamma_c: Vec::new(),
            tau_u2: 1.0,
            tau_z2: 1.0,
            phi_u: 0.6,
            phi_z: 0.4,
            rho: 0.35,
            sigma_y2: 1.0,
            beta_uz: 0.0,
        }
    }

    /// Zeroes the coefficients a scenario rules out.
    fn constrain(mut self, design: Design) -> Self {
        match self.scenario {
            Scenario::A => {
                self.beta_zbar = 0.0;
                self.beta_ubar = 0.0;
            }
            Scenario::B => {
                self.beta_u = 0.0;
                self.beta_ubar = 0.0;
                match design {
                    Design::PairedBinary => self.beta_uz = 0.0,
                    _ => self.rho = 0.0,
                }
            }
            Scenario::C => self.beta_zbar = 0.0,
            Scenario::D => self.beta_ubar = 0.0,
            Scenario::E => {
                self.beta_u = 0.0;
                self.beta_ubar = 0.0;
            }
            Scenario::F | Scenario::Full => {}
        }
        self
    }

    /// Motivating paired study: `phi_u = 0.7`, `phi_z = 0.5`, `beta_uz = 1`, no covariates.
    pub fn paired_binary(scenario: Scenario) -> Self {
        Self {
            phi_u: 0.7,
            phi_z: 0.5,
            rho: 0.0,
            beta_uz: 1.0,
            ..Self::base(scenario)
        }
        .constrain(Design::PairedBinary)
    }

    /// Main network simulation: line-graph defaults with four covariates.
    pub fn network(scenario: Scenario) -> Self {
        Self {
            beta_c: SIMULATION_BETA_C.to_vec(),
            gamma_c: SIMULATION_GAMMA_C.to_vec(),
            ..Self::base(scenario)
        }
        .constrain(Design::Network)
    }

    /// Main paired simulation: as [`network`](Self::network) with `tau^2 = 2`.
    pub fn paired_gaussian(scenario: Scenario) -> Self {
        Self {
            tau_u2: 2.0,
            tau_z2: 2.0,
            ..Self::network(scenario)
        }
        .constrain(Design::PairedGaussian)
    }

    /// Motivating network study: network defaults without covariates.
    pub fn motivating_network(scenario: Scenario) -> Self {
        Self {
            beta_c: Vec::new(),
            gamma_c: Vec::new(),
            ..Self::network(scenario)
        }
    }

    pub fn defaults(scenario: Scenario, design: Design) -> Self {
        match design {
            Design::PairedBinary => Self::paired_binary(scenario),
            Design::PairedGaussian => Self::paired_gaussian(scenario),
            Design::Network => Self::network(scenario),
        }
    }

    /// Defaults for `design`, with `key = value` overrides applied and the
    /// result validated.
    pub fn with_overrides(
        scenario: Scenario,
        design: Design,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut cfg = Self::defaults(scenario, design);
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate(design)?;
        Ok(cfg)
    }

    /// Sets one named parameter from text. Vector parameters take
    /// comma-separated values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let scalar = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("`{key}`: cannot parse `{value}` as a number: {e}")))
        };
        let vector = || {
            value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| invalid(format!("`{key}`: bad entry `{s}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        };
        match key {
            "beta0" => self.beta0 = scalar()?,
            "beta_z" => self.beta_z = scalar()?,
            "beta_zbar" => self.beta_zbar = scalar()?,
            "beta_u" => self.beta_u = scalar()?,
            "beta_ubar" => self.beta_ubar = scalar()?,
            "beta_c" => self.beta_c = vector()?,
            "gamma0" => self.gamma0 = scalar()?,
            "gamma_c" => self.gamma_c = vector()?,
            "tau_u2" => self.tau_u2 = scalar()?,
            "tau_z2" => self.tau_z2 = scalar()?,
            "phi_u" => self.phi_u = scalar()?,
            "phi_z" => self.phi_z = scalar()?,
            "rho" => self.rho = scalar()?,
            "sigma_y2" => self.sigma_y2 = scalar()?,
            "beta_uz" => self.beta_uz = scalar()?,
            other => return Err(invalid(format!("unknown scenario parameter `{other}`"))),
        }
        Ok(())
    }

    pub fn n_covariates(&self) -> usize {
        self.beta_c.len()
    }

    /// Checks parameter ranges and the scenario's zero constraints.
    pub fn validate(&self, design: Design) -> Result<()> {
        if self.beta_c.len() != self.gamma_c.len() {
            return Err(invalid(format!(
                "beta_c has {} entries but gamma_c has {}",
                self.beta_c.len(),
                self.gamma_c.len()
            )));
        }
        if !(self.sigma_y2 > 0.0) {
            return Err(invalid(format!(
                "sigma_y2 must be positive, got {}",
                self.sigma_y2
            )));
        }
        if design != Design::PairedBinary {
            if !(self.tau_u2 > 0.0 && self.tau_z2 > 0.0) {
                return Err(invalid("tau_u2 and tau_z2 must be positive"));
            }
            if !(self.rho.abs() < 1.0) {
                return Err(invalid(format!(
                    "rho must lie in (-1, 1), got {}",
                    self.rho
                )));
            }
        }
        for (name, v) in [("phi_u", self.phi_u), ("phi_z", self.phi_z)] {
            if !(v.abs() < 1.0) {
                return Err(invalid(format!("{name} must lie in (-1, 1), got {v}")));
            }
        }
        let must_be_zero: Vec<(&str, f64)> = match self.scenario {
            Scenario::A => vec![("beta_zbar", self.beta_zbar), ("beta_ubar", self.beta_ubar)],
            Scenario::B => {
                let coupling = match design {
                    Design::PairedBinary => ("beta_uz", self.beta_uz),
                    _ => ("rho", self.rho),
                };
                vec![
                    ("beta_u", self.beta_u),
                    ("beta_ubar", self.beta_ubar),
                    coupling,
                ]
            }
            Scenario::C => vec![("beta_zbar", self.beta_zbar)],
            Scenario::D => vec![("beta_ubar", self.beta_ubar)],
            Scenario::E => vec![("beta_u", self.beta_u), ("beta_ubar", self.beta_ubar)],
            Scenario::F | Scenario::Full => vec![],
        };
        for (name, v) in must_be_zero {
            if v != 0.0 {
                return Err(invalid(format!(
                    "scenario {} requires {name} = 0, got {v}",
                    self.scenario
                )));
            }
        }
        Ok(())
    }
}

/// Observed data plus, for simulated data, the latent confounder.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub adjacency: AdjacencyStructure,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub zbar: DVector<f64>,
    /// `n x p` covariate matrix.
    pub c: DMatrix<f64>,
    pub u: Option<DVector<f64>>,
    pub ubar: Option<DVector<f64>>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.c.ncols()
    }

    pub fn has_latent(&self) -> bool {
        self.u.is_some() && self.ubar.is_some()
    }

    /// Builds a dataset from observed columns, computing the neighborhood
    /// exposure from `adjacency`.
    pub fn from_observed(
        adjacency: AdjacencyStructure,
        y: DVector<f64>,
        z: DVector<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        let n = adjacency.n();
        if y.len() != n || z.len() != n || c.nrows() != n {
            return Err(invalid(format!(
                "column lengths (y {}, z {}, c {}) do not match {n} units",
                y.len(),
                z.len(),
                c.nrows()
            )));
        }
        let zbar = adjacency.neighbor_average(&z)?;
        Ok(Self {
            adjacency,
            y,
            z,
            zbar,
            c,
            u: None,
            ubar: None,
            seed: None,
        })
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["y".to_string(), "z".to_string(), "zbar".to_string()];
        h.extend((1..=self.p()).map(|j| format!("c{j}")));
        if self.has_latent() {
            h.push("u".into());
            h.push("ubar".into());
        }
        h
    }

    /// Writes the data CSV and the sidecar edge list.
    pub fn write(&self, data_path: &Path, edges_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(data_path)?;
        w.write_record(self.header())?;
        for i in 0..self.n() {
            let mut row = vec![self.y[i], self.z[i], self.zbar[i]];
            row.extend(self.c.row(i).iter());
            if let (Some(u), Some(ub)) = (&self.u, &self.ubar) {
                row.push(u[i]);
                row.push(ub[i]);
            }
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        self.adjacency
            .write_edge_list(std::fs::File::create(edges_path)?)
    }

    /// Reads a CSV with header `y,z,zbar,c1..cp[,u,ubar]` and its edge list.
    pub fn read(data_path: &Path, edges_path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(data_path)?;
        let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let find = |name: &str| header.iter().position(|h| h == name);
        let col = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
        let (iy, iz, izbar) = (col("y")?, col("z")?, col("zbar")?);
        let cov: Vec<usize> = (1..).map_while(|j| find(&format!("c{j}"))).collect();
        let latent = match (find("u"), find("ubar")) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        path: data_path.to_path_buf(),
                        line: lineno + 2,
                        message: format!("bad number `{s}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Parse {
                    path: data_path.to_path_buf(),
                    line: lineno + 2,
                    message: format!("expected {} fields, found {}", header.len(), row.len()),
                });
            }
            rows.push(row);
        }
        let n = rows.len();
        let units = crate::spatial::edge_list_unit_count(edges_path)?.unwrap_or(n);
        if units != n {
            return Err(invalid(format!(
                "edge list declares {units} units but the data have {n} rows"
            )));
        }
        let adjacency = AdjacencyStructure::read_edge_file(edges_path, Some(n))?;
        let column = |j: usize| DVector::from_iterator(n, rows.iter().map(|r| r[j]));
        Ok(Self {
            adjacency,
            y: column(iy),
            z: column(iz),
            zbar: column(izbar),
            c: DMatrix::from_fn(n, cov.len(), |i, j| rows[i][cov[j]]),
            u: latent.map(|(a, _)| column(a)),
            ubar: latent.map(|(_, b)| column(b)),
            seed: None,
        })
    }
}

/// `n x p` matrix of independent standard normal entries, filled row by row.
pub fn generate_covariates<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let values: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(rng)).collect();
    DMatrix::from_row_slice(n, p, &values)
}

/// Exposure mean `gamma0 + C gamma_c`.
pub fn exposure_mean(config: &ScenarioConfig, c: &DMatrix<f64>) -> DVector<f64> {
    let mut mu = DVector::from_element(c.nrows(), config.gamma0);
    if c.ncols() > 0 {
        mu += c * DVector::from_column_slice(&config.gamma_c);
    }
    mu
}

/// Draws `(U, Z)` from the joint Gaussian model with CAR conditional
/// precisions and a diagonal cross block.
pub fn sample_joint_uz<R: Rng + ?Sized>(
    adj: &AdjacencyStructure,
    config: &ScenarioConfig,
    c: &DMatrix<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if c.nrows() != adj.n() || c.ncols() != config.gamma_c.len() {
        return Err(invalid(format!(
            "covariates are {}x{}, expected {}x{}",
            c.nrows(),
            c.ncols(),
            adj.n(),
            config.gamma_c.len()
        )));
    }
    let factor = JointPrecisionFactor::new(
        adj,
        config.tau_u2.sqrt(),
        config.tau_z2.sqrt(),
        config.phi_u,
        config.phi_z,
        config.rho,
    )?;
    let (u, z0) = factor.sample(rng);
    Ok((u, z0 + exposure_mean(config, c)))
}

/// Outcome from the linear structural model with Gaussian noise.
pub fn sample_outcome<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    z: &DVector<f64>,
    zbar: &DVector<f64>,
    c: &DMatrix<f64>,
    u: &DVector<f64>,
    ubar: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = z.len();
    if zbar.len() != n || u.len() != n || ubar.len() != n || c.nrows() != n {
        return Err(invalid("outcome inputs have mismatched lengths"));
    }
    if c.ncols() != config.beta_c.len() {
        return Err(invalid(format!(
            "{} covariates but {} covariate coefficients",
            c.ncols(),
            config.beta_c.len()
        )));
    }
    let sd = config.sigma_y2.sqrt();
    Ok(DVector::from_fn(n, |i, _| {
        let cb: f64 = c
            .row(i)
            .iter()
            .zip(&config.beta_c)
            .map(|(a, b)| a * b)
            .sum();
        let mean = config.beta0
            + config.beta_z * z[i]
            + config.beta_zbar * zbar[i]
            + cb
            + config.beta_u * u[i]
            + config.beta_ubar * ubar[i];
        let e: f64 = StandardNormal.sample(rng);
        mean + sd * e
    }))
}

/// Covariates, then `(U, Z)`, then neighborhood averages and the outcome.
pub fn generate_network_dataset<R: Rng + ?Sized>(
    adj: &AdjacencyStructure,
    config: &ScenarioConfig,
    p: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if p != config.n_covariates() {
        return Err(invalid(format!(
            "requested {p} covariates but the configuration has {}",
            config.n_covariates()
        )));
    }
    let design = if adj.degrees().iter().all(|&d| d == 1) {
        Design::PairedGaussian
    } else {
        Design::Network
    };
    config.validate(design)?;
    let c = generate_covariates(adj.n(), p, rng);
    let (u, z) = sample_joint_uz(adj, config, &c, rng)?;
    let zbar = adj.neighbor_average(&z)?;
    let ubar = adj.neighbor_average(&u)?;
    let y = sample_outcome(config, &z, &zbar, &c, &u, &ubar, rng)?;
    Ok(Dataset {
        adjacency: adj.clone(),
        y,
        z,
        zbar,
        c,
        u: Some(u),
        ubar: Some(ubar),
        seed: None,
    })
}

fn correlated_pair<R: Rng + ?Sized>(corr: f64, rng: &mut R) -> (f64, f64) {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    (a, corr * a + (1.0 - corr * corr).sqrt() * b)
}

/// Paired binary-exposure design: per pair, correlated `U` and correlated
/// exposure noise, `Z ~ Bernoulli(logistic(beta_uz U + eps_Z))`.
pub fn generate_paired_binary_dataset<R: Rng + ?Sized>(
    n_pairs: usize,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Dataset> {
    config.validate(Design::PairedBinary)?;
    if config.n_covariates() != 0 {
        return Err(invalid("the paired binary design has no covariates"));
    }
    let adjacency = AdjacencyStructure::pairs(n_pairs)?;
    let n = 2 * n_pairs;
    let mut u = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    for k in 0..n_pairs {
        let (u1, u2) = correlated_pair(config.phi_u, rng);
        let (e1, e2) = correlated_pair(config.phi_z, rng);
        u[2 * k] = u1;
        u[2 * k + 1] = u2;
        for (i, ui, e) in [(2 * k, u1, e1), (2 * k + 1, u2, e2)] {
            let p = 1.0 / (1.0 + (-(config.beta_uz * ui + e)).exp());
            z[i] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
    }
    let zbar = adjacency.neighbor_average(&z)?;
    let ubar = adjacency.neighbor_average(&u)?;
    let c = DMatrix::zeros(n, 0);
    let y = sample_outcome(config, &z, &zbar, &c, &u, &ubar, rng)?;
    Ok(Dataset {
        adjacency,
        y,
        z,
        zbar,
        c,
        u: Some(u),
        ubar: Some(ubar),
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn covariates_are_standard_and_deterministic() {
        let c = generate_covariates(500, 4, &mut rng(1));
        for j in 0..4 {
            let mean = c.column(j).mean();
            assert!(mean.abs() < 4.0 / 500f64.sqrt(), "column {j} mean {mean}");
        }
        assert_eq!(c, generate_covariates(500, 4, &mut rng(1)));
        assert_eq!(generate_covariates(10, 0, &mut rng(1)).ncols(), 0);
    }

    #[test]
    fn scenario_constraints_are_enforced() {
        for s in Scenario::ALL {
            for d in [
                Design::PairedBinary,
                Design::PairedGaussian,
                Design::Network,
            ] {
                ScenarioConfig::defaults(s, d).validate(d).unwrap();
            }
        }
        let mut a = ScenarioConfig::network(Scenario::A);
        a.beta_zbar = 0.8;
        assert!(a.validate(Design::Network).is_err());
        let mut b = ScenarioConfig::network(Scenario::B);
        b.rho = 0.35;
        assert!(b.validate(Design::Network).is_err());
        let mut b = ScenarioConfig::paired_binary(Scenario::B);
        b.beta_uz = 1.0;
        assert!(b.validate(Design::PairedBinary).is_err());
        let overrides = [("beta_u".to_string(), "1".to_string())];
        assert!(ScenarioConfig::with_overrides(Scenario::E, Design::Network, &overrides).is_err());
        let overrides = [("phi_z".to_string(), "0.2".to_string())];
        let cfg = ScenarioConfig::with_overrides(Scenario::E, Design::Network, &overrides).unwrap();
        assert_eq!(cfg.phi_z, 0.2);
    }

    #[test]
    fn outcome_formula_without_noise() {
        let cfg = ScenarioConfig {
            beta0: 0.3,
            sigma_y2: 1e-300,
            ..ScenarioConfig::motivating_network(Scenario::F)
        };
        let one = DVector::from_element(3, 1.0);
        let zero = DVector::zeros(3);
        let c = DMatrix::zeros(3, 0);
        let y = sample_outcome(&cfg, &one, &zero, &c, &zero, &zero, &mut rng(2)).unwrap();
        for v in y.iter() {
            assert!((v - 1.3).abs() < 1e-12);
        }
        assert!(sample_outcome(
            &cfg,
            &one,
            &DVector::zeros(2),
            &c,
            &zero,
            &zero,
            &mut rng(2)
        )
        .is_err());
    }

    #[test]
    fn network_dataset_invariants() {
        let adj = AdjacencyStructure::line(60).unwrap();
        let cfg = ScenarioConfig::network(Scenario::F);
        let d = generate_network_dataset(&adj, &cfg, 4, &mut rng(3)).unwrap();
        assert_eq!(d.zbar, adj.neighbor_average(&d.z).unwrap());
        assert_eq!(
            d.ubar.as_ref().unwrap(),
            &adj.neighbor_average(d.u.as_ref().unwrap()).unwrap()
        );
        assert_eq!(
            d,
            generate_network_dataset(&adj, &cfg, 4, &mut rng(3)).unwrap()
        );
        assert_ne!(
            d,
            generate_network_dataset(&adj, &cfg, 4, &mut rng(4)).unwrap()
        );
        assert!(generate_network_dataset(&adj, &cfg, 2, &mut rng(3)).is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let adj = AdjacencyStructure::line(25).unwrap();
        let d =
            generate_network_dataset(&adj, &ScenarioConfig::network(Scenario::C), 4, &mut rng(5))
                .unwrap();
        let (dp, ep) = (dir.path().join("d.csv"), dir.path().join("d.edges"));
        d.write(&dp, &ep).unwrap();
        let back = Dataset::read(&dp, &ep).unwrap();
        assert_eq!(back, d);
        let text = std::fs::read_to_string(&dp).unwrap();
        assert!(text.starts_with("y,z,zbar,c1,c2,c3,c4,u,ubar"));
    }

    #[test]
    fn paired_binary_marginals() {
        let cfg = ScenarioConfig::paired_binary(Scenario::B);
        let d = generate_paired_binary_dataset(10_000, &cfg, &mut rng(6)).unwrap();
        let p1 = d.z.mean();
        assert!((p1 - 0.5).abs() < 0.02, "P(Z=1) = {p1}");
        let u = d.u.as_ref().unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for k in 0..10_000 {
            let (a, b) = (u[2 * k], u[2 * k + 1]);
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((corr - 0.7).abs() < 0.03, "corr = {corr}");
        let again = generate_paired_binary_dataset(10_000, &cfg, &mut rng(6)).unwrap();
        assert_eq!(d, again);
    }
}
