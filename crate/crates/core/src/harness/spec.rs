//! Experiment specifications and their flat `key = value` config form.

use std::path::{Path, PathBuf};

use crate::bayes::ChainSettings;
use crate::datagen::{Design, ScenarioConfig};
use crate::error::{invalid, Error, Result};
use crate::ols::ConditioningSet;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Least squares under each configured conditioning set.
    Ols,
    /// The joint Bayesian model, gated on split R-hat.
    Bayes,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ols" => Ok(Method::Ols),
            "bayes" => Ok(Method::Bayes),
            other => Err(invalid(format!("unknown method `{other}`"))),
        }
    }
}

fn default_methods(design: Design) -> Vec<Method> {
    match design {
        Design::PairedBinary => vec![Method::Ols],
        _ => vec![Method::Ols, Method::Bayes],
    }
}

/// Everything needed to rerun a simulation bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub design: Design,
    /// Restricts the run to one scenario; `None` runs all of them.
    pub scenario: Option<Scenario>,
    /// Total number of units (twice the number of pairs for paired designs).
    pub n_units: usize,
    pub n_replications: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// `ScenarioConfig` parameters applied on top of the design defaults.
    pub overrides: Vec<(String, String)>,
    /// Conditioning sets for OLS rows; empty selects the runner's default.
    pub conditioning: Vec<ConditioningSet>,
    pub chain: ChainSettings,
    pub n_chains: usize,
    pub output: Option<PathBuf>,
    pub markdown_output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(design: Design, n_units: usize, n_replications: usize) -> Self {
        Self {
            design,
            scenario: None,
            n_units,
            n_replications,
            methods: default_methods(design),
            seed: 1,
            overrides: Vec::new(),
            conditioning: Vec::new(),
            chain: ChainSettings::default(),
            n_chains: 2,
            output: None,
            markdown_output: None,
        }
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = Some(scenario);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_methods(mut self, methods: &[Method]) -> Self {
        self.methods = methods.to_vec();
        self
    }

    pub fn uses(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }

    /// Scenarios covered by the run.
    pub fn scenarios(&self) -> Vec<Scenario> {
        match self.scenario {
            Some(s) => vec![s],
            None => Scenario::ALL
                .into_iter()
                .filter(|&s| s != Scenario::Full)
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replications == 0 {
            return Err(invalid("n_replications must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("at least one method is required"));
        }
        match self.design {
            Design::PairedBinary | Design::PairedGaussian => {
                if self.n_units < 4 || self.n_units % 2 != 0 {
                    return Err(invalid(format!(
                        "paired designs need an even number of units (at least 4), got {}",
                        self.n_units
                    )));
                }
            }
            Design::Network => {
                if self.n_units < 3 {
                    return Err(invalid(format!(
                        "network design needs at least 3 units, got {}",
                        self.n_units
                    )));
                }
            }
        }
        if self.design == Design::PairedBinary && self.uses(Method::Bayes) {
            return Err(invalid(
                "the Bayesian model assumes a Gaussian exposure; use ols with paired-binary",
            ));
        }
        if self.uses(Method::Bayes) {
            self.chain.validate()?;
            if self.n_chains == 0 {
                return Err(invalid("n_chains must be at least 1"));
            }
        }
        for s in self.scenarios() {
            let mut cfg = ScenarioConfig::defaults(s, self.design);
            for (k, v) in &self.overrides {
                cfg.set(k, v)?;
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Setting `design` also resets
    /// `methods` to that design's default, so set methods after it. Keys that are not experiment or
    /// sampler settings are taken as scenario parameter overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let count = || {
            value
                .parse::<usize>()
                .map_err(|e| invalid(format!("`{key}`: cannot parse `{value}`: {e}")))
        };
        match key.trim() {
            "design" => {
                self.design = value.parse()?;
                self.methods = default_methods(self.design);
            }
            "scenario" => {
                self.scenario = match value {
                    "all" | "" => None,
                    s => Some(s.parse()?),
                }
            }
            "n_units" | "n" => self.n_units = count()?,
            "n_pairs" => self.n_units = 2 * count()?,
            "n_replications" | "reps" => self.n_replications = count()?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|e| invalid(format!("`seed`: cannot parse `{value}`: {e}")))?
            }
            "conditioning" => {
                self.conditioning = value
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "n_iter" => self.chain.n_iter = count()?,
            "n_burnin" => self.chain.n_burnin = count()?,
            "thin" => self.chain.thin = count()?,
            "n_chains" => self.n_chains = count()?,
            "output" => self.output = Some(PathBuf::from(value)),
            "markdown" => self.markdown_output = Some(PathBuf::from(value)),
            other => {
                let mut probe = ScenarioConfig::defaults(Scenario::Full, self.design);
                probe.set(other, value)?;
                self.overrides.push((other.to_string(), value.to_string()));
            }
        }
        Ok(())
    }

    /// Parses the flat config format: one `key = value` per line, `#`
    /// comments and blank lines ignored. Settings apply in file order on
    /// top of `base`.
    pub fn from_config_str(base: Self, text: &str, origin: &Path) -> Result<Self> {
        let mut spec = base;
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let wrap = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: k + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| wrap(format!("expected `key = value`, found `{line}`")))?;
            spec.set(key.trim(), value.trim())
                .map_err(|e| wrap(e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn from_config_file(base: Self, path: &Path) -> Result<Self> {
        Self::from_config_str(base, &std::fs::read_to_string(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_sets_fields_and_overrides() {
        let text = "# Table 2 row\n\
                    design = network-line\n\
                    scenario = 2a\n\
                    n_units = 200   # units\n\
                    reps = 5\n\
                    methods = ols\n\
                    seed = 9\n\
                    n_iter = 300\n\
                    phi_z = 0.45\n\
                    conditioning = (Z);(Z,Zbar,U)\n";
        let base = ExperimentSpec::new(Design::PairedBinary, 400, 300);
        let spec = ExperimentSpec::from_config_str(base, text, Path::new("cfg")).unwrap();
        assert_eq!(spec.design, Design::Network);
        assert_eq!(spec.scenario, Some(Scenario::A));
        assert_eq!((spec.n_units, spec.n_replications, spec.seed), (200, 5, 9));
        assert_eq!(spec.methods, vec![Method::Ols]);
        assert_eq!(spec.chain.n_iter, 300);
        assert_eq!(
            spec.overrides,
            vec![("phi_z".to_string(), "0.45".to_string())]
        );
        assert_eq!(
            spec.conditioning,
            vec![ConditioningSet::Z, ConditioningSet::Z_ZBAR_U]
        );
        spec.validate().unwrap();
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let base = ExperimentSpec::new(Design::Network, 200, 1);
        let err =
            ExperimentSpec::from_config_str(base.clone(), "seed = 1\nbogus = 2\n", Path::new("c"));
        assert!(matches!(err, Err(Error::Parse { line: 2, .. })));
        let err = ExperimentSpec::from_config_str(base, "no equals sign\n", Path::new("c"));
        assert!(matches!(err, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let ok = ExperimentSpec::new(Design::Network, 50, 2);
        ok.validate().unwrap();
        let mut s = ok.clone();
        s.n_replications = 0;
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.methods.clear();
        assert!(s.validate().is_err());
        let s = ExperimentSpec::new(Design::PairedGaussian, 51, 2);
        assert!(s.validate().is_err());
        let s = ExperimentSpec::new(Design::PairedBinary, 400, 2).with_methods(&[Method::Bayes]);
        assert!(s.validate().is_err());
    }
}
