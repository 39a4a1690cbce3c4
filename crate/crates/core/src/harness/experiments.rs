//! Replication runners for the motivating studies and the main simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bayes::{default_priors, derive_chain_seed, fit_chains, Model, ModelData};
use crate::datagen::{
    generate_network_dataset, generate_paired_binary_dataset, Dataset, Design, ScenarioConfig,
};
use crate::error::{invalid, Error, Result};
use crate::ols::{build_design, fit_ols, ConditioningSet};
use crate::scenario::Scenario;
use crate::spatial::AdjacencyStructure;

use super::spec::{ExperimentSpec, Method};
use super::table::{EffectStats, Estimate, ResultRow, ResultTable};

/// One data-generating configuration within a table: a scenario, an
/// optional parameter change and the resulting parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    /// Scenario the row is reported under.
    pub scenario: Scenario,
    /// `key=value` label of the parameter change, empty for the default.
    pub variation: String,
    pub config: ScenarioConfig,
}

impl GridRow {
    fn plain(scenario: Scenario, config: ScenarioConfig) -> Self {
        Self {
            scenario,
            variation: String::new(),
            config,
        }
    }

    fn varied(scenario: Scenario, base: &ScenarioConfig, key: &str, value: f64) -> Self {
        let mut config = base.clone();
        config
            .set(key, &value.to_string())
            .expect("grid keys are scenario parameters");
        Self {
            scenario,
            variation: format!("{key}={value}"),
            config,
        }
    }
}

/// Rows of the paired binary-exposure study. The interference rows take the
/// exposure-predictor configuration (no confounder effect on the outcome,
/// confounder still driving the exposure) with the exposure dependence varied.
pub fn motivating_pairs_grid() -> Vec<GridRow> {
    let cfg = ScenarioConfig::paired_binary;
    let mut rows = vec![GridRow::plain(Scenario::A, cfg(Scenario::A))];
    for phi in [0.7, 0.5, 0.3] {
        rows.push(GridRow::varied(
            Scenario::B,
            &cfg(Scenario::E),
            "phi_z",
            phi,
        ));
    }
    rows.push(GridRow::plain(Scenario::C, cfg(Scenario::C)));
    for phi in [0.5, 0.0] {
        rows.push(GridRow::varied(
            Scenario::D,
            &cfg(Scenario::D),
            "phi_z",
            phi,
        ));
    }
    for b in [1.5, 1.0, 0.5] {
        rows.push(GridRow::varied(
            Scenario::E,
            &cfg(Scenario::E),
            "beta_uz",
            b,
        ));
    }
    rows.push(GridRow::plain(Scenario::F, cfg(Scenario::F)));
    rows
}

/// Rows of the single-network study on a line graph, built the same way as
/// [`motivating_pairs_grid`] with the cross-correlation in place of the
/// logistic slope.
pub fn motivating_network_grid() -> Vec<GridRow> {
    let cfg = ScenarioConfig::motivating_network;
    let mut rows = vec![GridRow::plain(Scenario::A, cfg(Scenario::A))];
    for phi in [0.6, 0.4, 0.2] {
        rows.push(GridRow::varied(
            Scenario::B,
            &cfg(Scenario::E),
            "phi_z",
            phi,
        ));
    }
    rows.push(GridRow::plain(Scenario::C, cfg(Scenario::C)));
    for phi in [0.4, 0.0] {
        rows.push(GridRow::varied(
            Scenario::D,
            &cfg(Scenario::D),
            "phi_z",
            phi,
        ));
    }
    for rho in [0.15, 0.35, 0.45] {
        rows.push(GridRow::varied(Scenario::E, &cfg(Scenario::E), "rho", rho));
    }
    rows.push(GridRow::plain(Scenario::F, cfg(Scenario::F)));
    rows
}

/// Label of an OLS model: the conditioning set plus `C` when measured
/// covariates enter.
pub fn model_label(set: &ConditioningSet, p: usize) -> String {
    let label = set.label();
    if set.include_c && p > 0 {
        format!("{},C)", label.trim_end_matches(')'))
    } else {
        label
    }
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of a table row, keyed by what the row is rather than its position,
/// so filtering scenarios leaves the remaining rows unchanged.
fn row_seed(seed: u64, design: Design, row: &GridRow, n_units: usize) -> u64 {
    let key = format!(
        "{}|{}|{}|{}",
        design.name(),
        row.scenario.id(),
        row.variation,
        n_units
    );
    derive_chain_seed(seed, fnv1a(&key))
}

fn generate(
    design: Design,
    graph: &Option<AdjacencyStructure>,
    n_units: usize,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    match (design, graph) {
        (Design::PairedBinary, _) => generate_paired_binary_dataset(n_units / 2, cfg, rng),
        (_, Some(adj)) => generate_network_dataset(adj, cfg, cfg.n_covariates(), rng),
        (_, None) => Err(invalid("missing graph for a Gaussian design")),
    }
}

type OlsOutcome = Option<(Estimate, Option<Estimate>)>;

enum BayesOutcome {
    Failed,
    NotConverged,
    Fit(Estimate, Estimate),
}

struct Replication {
    ols: Vec<OlsOutcome>,
    bayes: Option<BayesOutcome>,
}

fn ols_estimates(ds: &Dataset, set: &ConditioningSet) -> Result<(Estimate, Option<Estimate>)> {
    let fit = fit_ols(&ds.y, &build_design(ds, set)?)?;
    let get = |name: &str| {
        fit.coef(name)
            .zip(fit.ci(name))
            .map(|(value, (lower, upper))| Estimate {
                value,
                lower,
                upper,
            })
    };
    let local = get("z").ok_or_else(|| Error::MissingColumn("z".into()))?;
    Ok((local, get("zbar")))
}

fn bayes_estimates(ds: &Dataset, spec: &ExperimentSpec, seed: u64) -> Result<BayesOutcome> {
    let priors = default_priors(ds, &ds.adjacency)?;
    let model = Model::new(ModelData::from_dataset(ds), priors)?;
    let fit = fit_chains(&model, &spec.chain, spec.n_chains, seed)?;
    if !fit.converged() {
        return Ok(BayesOutcome::NotConverged);
    }
    let est = |name: &str| -> Result<Estimate> {
        let s = fit.summary(name)?;
        Ok(Estimate {
            value: s.mean,
            lower: s.lower,
            upper: s.upper,
        })
    };
    Ok(BayesOutcome::Fit(est("beta_z")?, est("beta_zbar")?))
}

fn replicate(
    spec: &ExperimentSpec,
    graph: &Option<AdjacencyStructure>,
    cfg: &ScenarioConfig,
    sets: &[ConditioningSet],
    seed: u64,
    index: usize,
) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let ds = generate(spec.design, graph, spec.n_units, cfg, &mut rng)?;
    let chain_seed: u64 = rng.random();
    let ols = if spec.uses(Method::Ols) {
        sets.iter()
            .map(|set| match ols_estimates(&ds, set) {
                Ok(e) => Some(e),
                Err(e) => {
                    log::warn!("replication {index}: OLS {set} failed: {e}");
                    None
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let bayes = spec.uses(Method::Bayes).then(|| {
        bayes_estimates(&ds, spec, chain_seed).unwrap_or_else(|e| {
            log::warn!("replication {index}: sampler failed: {e}");
            BayesOutcome::Failed
        })
    });
    Ok(Replication { ols, bayes })
}

fn run_grid(
    rows: &[GridRow],
    spec: &ExperimentSpec,
    sets: &[ConditioningSet],
) -> Result<ResultTable> {
    spec.validate()?;
    let graph = match spec.design {
        Design::PairedBinary => None,
        Design::PairedGaussian => Some(AdjacencyStructure::pairs(spec.n_units / 2)?),
        Design::Network => Some(AdjacencyStructure::line(spec.n_units)?),
    };
    let mut table = ResultTable::new();
    for row in rows {
        let mut cfg = row.config.clone();
        for (k, v) in &spec.overrides {
            cfg.set(k, v)?;
        }
        cfg.validate(spec.design)?;
        let seed = row_seed(spec.seed, spec.design, row, spec.n_units);
        log::info!(
            "{} {} n={}: {} replications",
            row.scenario,
            row.variation,
            spec.n_units,
            spec.n_replications
        );
        let reps: Vec<Replication> = (0..spec.n_replications)
            .into_par_iter()
            .map(|k| replicate(spec, &graph, &cfg, sets, seed, k))
            .collect::<Result<_>>()?;
        let make_row =
            |method: &str, model: String, ok: Vec<(Estimate, Option<Estimate>)>, failed| {
                let local: Vec<Estimate> = ok.iter().map(|e| e.0).collect();
                let interference: Vec<Estimate> = ok.iter().filter_map(|e| e.1).collect();
                ResultRow {
                    scenario: row.scenario.id().to_string(),
                    variation: row.variation.clone(),
                    method: method.to_string(),
                    model,
                    n: spec.n_units,
                    n_reps: spec.n_replications,
                    n_converged: ok.len(),
                    n_failed: failed,
                    local: EffectStats::from_estimates(&local, cfg.beta_z),
                    interference: EffectStats::from_estimates(&interference, cfg.beta_zbar),
                }
            };
        if spec.uses(Method::Ols) {
            for (j, set) in sets.iter().enumerate() {
                let ok: Vec<_> = reps.iter().filter_map(|r| r.ols[j]).collect();
                let failed = spec.n_replications - ok.len();
                table.rows.push(make_row(
                    "ols",
                    model_label(set, cfg.n_covariates()),
                    ok,
                    failed,
                ));
            }
        }
        if spec.uses(Method::Bayes) {
            let mut ok = Vec::new();
            let mut failed = 0;
            for r in &reps {
                match r.bayes {
                    Some(BayesOutcome::Fit(a, b)) => ok.push((a, Some(b))),
                    Some(BayesOutcome::Failed) => failed += 1,
                    _ => {}
                }
            }
            table
                .rows
                .push(make_row("bayes", "joint".into(), ok, failed));
        }
    }
    Ok(table)
}

fn filtered(rows: Vec<GridRow>, scenario: Option<Scenario>) -> Vec<GridRow> {
    rows.into_iter()
        .filter(|r| scenario.map_or(true, |s| r.scenario == s))
        .collect()
}

fn sets_or(spec: &ExperimentSpec, default: &[ConditioningSet]) -> Vec<ConditioningSet> {
    if spec.conditioning.is_empty() {
        default.to_vec()
    } else {
        spec.conditioning.clone()
    }
}

/// Paired binary-exposure study: OLS under the five conditioning sets for
/// every scenario and parameter change.
pub fn run_motivating_pairs(spec: &ExperimentSpec) -> Result<ResultTable> {
    if spec.design != Design::PairedBinary {
        return Err(invalid(
            "the motivating pairs study uses the paired-binary design",
        ));
    }
    let rows = filtered(motivating_pairs_grid(), spec.scenario);
    run_grid(&rows, spec, &sets_or(spec, &ConditioningSet::MOTIVATING))
}

/// Single-network study on a line graph with the joint CAR exposure model.
pub fn run_motivating_network(spec: &ExperimentSpec) -> Result<ResultTable> {
    if spec.design != Design::Network {
        return Err(invalid(
            "the motivating network study uses the network-line design",
        ));
    }
    let rows = filtered(motivating_network_grid(), spec.scenario);
    run_grid(&rows, spec, &sets_or(spec, &ConditioningSet::MOTIVATING))
}

/// Main simulation: per replication, OLS on the exposures and measured
/// covariates and the Bayesian model with the R-hat gate.
pub fn run_main_simulation(spec: &ExperimentSpec) -> Result<ResultTable> {
    let rows: Vec<GridRow> = spec
        .scenarios()
        .into_iter()
        .map(|s| GridRow::plain(s, ScenarioConfig::defaults(s, spec.design)))
        .collect();
    run_grid(&rows, spec, &sets_or(spec, &[ConditioningSet::Z_ZBAR]))
}

/// Tables of the simulation studies that [`reproduce`] knows how to rerun.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaperTable {
    /// Paired binary exposure, OLS only.
    Pairs,
    /// Network main simulation, OLS and Bayes.
    Network,
    /// Line-graph motivating study, OLS only.
    MotivatingNetwork,
    /// Paired Gaussian main simulation, OLS and Bayes.
    PairedMain,
}

impl std::str::FromStr for PaperTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1" => Ok(PaperTable::Pairs),
            "2" => Ok(PaperTable::Network),
            "S1" | "S.1" => Ok(PaperTable::MotivatingNetwork),
            "S2" | "S.2" => Ok(PaperTable::PairedMain),
            other => Err(invalid(format!(
                "unknown table `{other}` (expected 1, 2, S1 or S2)"
            ))),
        }
    }
}

/// Replication counts: desk scale uses 100 replications for the sampler
/// tables and only the smallest sample size; `full` uses 500 and all sizes.
pub fn reproduction_specs(table: PaperTable, full: bool, seed: u64) -> Vec<ExperimentSpec> {
    let sizes: &[usize] = if full { &[200, 350, 500] } else { &[200] };
    let reps = if full { 500 } else { 100 };
    match table {
        PaperTable::Pairs => {
            vec![ExperimentSpec::new(Design::PairedBinary, 400, 300).with_seed(seed)]
        }
        PaperTable::MotivatingNetwork => vec![ExperimentSpec::new(Design::Network, 100, 200)
            .with_seed(seed)
            .with_methods(&[Method::Ols])],
        PaperTable::Network => sizes
            .iter()
            .map(|&n| ExperimentSpec::new(Design::Network, n, reps).with_seed(seed))
            .collect(),
        PaperTable::PairedMain => sizes
            .iter()
            .map(|&n| ExperimentSpec::new(Design::PairedGaussian, n, reps).with_seed(seed))
            .collect(),
    }
}

/// Runs every spec of [`reproduction_specs`] and concatenates the tables.
pub fn reproduce(table: PaperTable, full: bool, seed: u64) -> Result<ResultTable> {
    let mut out = ResultTable::new();
    for spec in reproduction_specs(table, full, seed) {
        out.extend(run_spec(table, &spec)?);
    }
    Ok(out)
}

/// Dispatches a spec to the runner of `table`.
pub fn run_spec(table: PaperTable, spec: &ExperimentSpec) -> Result<ResultTable> {
    match table {
        PaperTable::Pairs => run_motivating_pairs(spec),
        PaperTable::MotivatingNetwork => run_motivating_network(spec),
        PaperTable::Network | PaperTable::PairedMain => run_main_simulation(spec),
    }
}
