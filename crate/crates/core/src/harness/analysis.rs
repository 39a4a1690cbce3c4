//! Analysis of observed data: a CSV of outcome, exposure and covariates
//! plus an edge list, fitted with both OLS specifications and the Bayesian
//! model under first- and second-degree precision graphs.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bayes::{default_priors, fit_chains, ChainSettings, Model, ModelData};
use crate::datagen::{
    generate_covariates, sample_joint_uz, sample_outcome, Dataset, ScenarioConfig,
};
use crate::error::{invalid, Error, Result};
use crate::ols::{fit_ols, DesignMatrix};
use crate::scenario::Scenario;
use crate::spatial::AdjacencyStructure;

/// Outcome, exposure and covariates read from a CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub c: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

impl ObservedData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn subset(&self, keep: &[usize]) -> Self {
        Self {
            y: DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.y[i])),
            z: DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.z[i])),
            c: self.c.select_rows(keep),
            covariate_names: self.covariate_names.clone(),
        }
    }
}

/// Reads a headed CSV with required columns `y` and `z`. Covariates are
/// the listed columns or, when `covariates` is `None`, every other column
/// whose values are all numeric.
pub fn read_observed_csv(path: &Path, covariates: Option<&[String]>) -> Result<ObservedData> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut records: Vec<Vec<String>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 2,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        records.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let numeric = |j: usize| -> Result<Vec<f64>> {
        records
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r[j].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        line: k + 2,
                        message: format!(
                            "column `{}`: `{}` is not a finite number",
                            header[j], r[j]
                        ),
                    })
            })
            .collect()
    };
    let (iy, iz) = (find("y")?, find("z")?);
    let y = numeric(iy)?;
    let z = numeric(iz)?;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    match covariates {
        Some(list) => {
            for name in list {
                let j = find(name)?;
                names.push(name.clone());
                columns.push(numeric(j)?);
            }
        }
        None => {
            for (j, name) in header.iter().enumerate() {
                if j == iy || j == iz {
                    continue;
                }
                if let Ok(col) = numeric(j) {
                    names.push(name.clone());
                    columns.push(col);
                } else {
                    log::info!("skipping non-numeric column `{name}`");
                }
            }
        }
    }
    let n = y.len();
    Ok(ObservedData {
        y: DVector::from_vec(y),
        z: DVector::from_vec(z),
        c: DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]),
        covariate_names: names,
    })
}

/// Centers every column and scales it to unit sample variance.
pub fn standardize_columns(c: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    if n < 2 && c.ncols() > 0 {
        return Err(invalid("standardizing needs at least two rows"));
    }
    let mut out = c.clone();
    for j in 0..c.ncols() {
        let mean = c.column(j).mean();
        let var = c.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) {
            return Err(invalid(format!(
                "covariate `{}` is constant",
                names.get(j).map_or("?", String::as_str)
            )));
        }
        let sd = var.sqrt();
        out.column_mut(j)
            .iter_mut()
            .for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Take logs of the exposure before neighborhood averaging.
    pub log_exposure: bool,
    /// Neighborhood order (1 or 2) of the exposure mapping.
    pub exposure_degree: u8,
    /// Neighborhood orders of the precision graph, one Bayesian fit each.
    pub gh_degrees: Vec<u8>,
    /// Explicit covariate columns; `None` takes all other numeric columns.
    pub covariates: Option<Vec<String>>,
    pub chain: ChainSettings,
    pub n_chains: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            log_exposure: false,
            exposure_degree: 2,
            gh_degrees: vec![1, 2],
            covariates: None,
            chain: ChainSettings::default(),
            n_chains: 2,
            seed: 1,
        }
    }
}

fn graph_of_degree(base: &AdjacencyStructure, degree: u8) -> Result<AdjacencyStructure> {
    match degree {
        1 => Ok(base.clone()),
        2 => Ok(base.second_degree()),
        d => Err(invalid(format!("adjacency degree must be 1 or 2, got {d}"))),
    }
}

/// Estimate and 95% interval for one effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    pub method: String,
    pub local: EffectInterval,
    /// Absent for the local-only regression.
    pub interference: Option<EffectInterval>,
    /// Split R-hat of the local and interference coefficients (Bayesian rows).
    pub rhat: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub n_input: usize,
    /// 1-based ids of units dropped for having no neighbor.
    pub dropped: Vec<usize>,
    pub covariates: Vec<String>,
    pub rows: Vec<AnalysisRow>,
}

impl AnalysisReport {
    pub fn n_analyzed(&self) -> usize {
        self.n_input - self.dropped.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "units: {} analyzed, {} dropped without neighbors; {} covariates",
            self.n_analyzed(),
            self.dropped.len(),
            self.covariates.len()
        )
        .unwrap();
        writeln!(
            out,
            "{:<34} {:>28} {:>28}",
            "method", "local effect", "interference effect"
        )
        .unwrap();
        let show =
            |e: &EffectInterval| format!("{:.3} ({:.3}, {:.3})", e.estimate, e.lower, e.upper);
        for r in &self.rows {
            let interference = r
                .interference
                .as_ref()
                .map_or(String::from("not estimated"), show);
            write!(
                out,
                "{:<34} {:>28} {:>28}",
                r.method,
                show(&r.local),
                interference
            )
            .unwrap();
            if let Some((a, b)) = r.rhat {
                write!(out, "   R-hat {a:.3}/{b:.3}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "method",
            "local",
            "local_lower",
            "local_upper",
            "interference",
            "interference_lower",
            "interference_upper",
            "rhat_local",
            "rhat_interference",
        ])?;
        let nan = EffectInterval {
            estimate: f64::NAN,
            lower: f64::NAN,
            upper: f64::NAN,
        };
        for r in &self.rows {
            let i = r.interference.unwrap_or(nan);
            let (ra, rb) = r.rhat.unwrap_or((f64::NAN, f64::NAN));
            let mut rec = vec![r.method.clone()];
            rec.extend(
                [
                    r.local.estimate,
                    r.local.lower,
                    r.local.upper,
                    i.estimate,
                    i.lower,
                    i.upper,
                    ra,
                    rb,
                ]
                .iter()
                .map(f64::to_string),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ols_row(
    method: &str,
    y: &DVector<f64>,
    columns: Vec<(String, DVector<f64>)>,
) -> Result<AnalysisRow> {
    let n = y.len();
    let mut cols = vec![DVector::from_element(n, 1.0)];
    let mut names = vec!["intercept".to_string()];
    for (name, col) in columns {
        names.push(name);
        cols.push(col);
    }
    let fit = fit_ols(y, &DesignMatrix::new(DMatrix::from_columns(&cols), names)?)?;
    let interval = |name: &str| {
        fit.coef(name)
            .zip(fit.ci(name))
            .map(|(estimate, (lower, upper))| EffectInterval {
                estimate,
                lower,
                upper,
            })
    };
    Ok(AnalysisRow {
        method: method.to_string(),
        local: interval("z").expect("z is in the design"),
        interference: interval("zbar"),
        rhat: None,
    })
}

/// Runs the four-model analysis on in-memory data.
pub fn analyze(
    data: &ObservedData,
    graph: &AdjacencyStructure,
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    if graph.n() != data.n() {
        return Err(invalid(format!(
            "edge list has {} units but the data have {} rows",
            graph.n(),
            data.n()
        )));
    }
    if options.gh_degrees.is_empty() {
        return Err(invalid("at least one precision-graph degree is required"));
    }
    let exposure_full = graph_of_degree(graph, options.exposure_degree)?;
    let dropped = exposure_full.isolated();
    if !dropped.is_empty() {
        log::warn!(
            "dropping {} units without neighbors: {:?}",
            dropped.len(),
            dropped.iter().map(|i| i + 1).collect::<Vec<_>>()
        );
    }
    let keep: Vec<usize> = (0..data.n()).filter(|i| !dropped.contains(i)).collect();
    let data = data.subset(&keep);
    let base = graph.subgraph(&keep);
    let exposure = exposure_full.subgraph(&keep);

    let mut z = data.z.clone();
    if options.log_exposure {
        if let Some(i) = z.iter().position(|&v| v <= 0.0) {
            return Err(invalid(format!(
                "log exposure needs positive values; unit {} has {}",
                keep[i] + 1,
                z[i]
            )));
        }
        z.iter_mut().for_each(|v| *v = v.ln());
    }
    let c = standardize_columns(&data.c, &data.covariate_names)?;
    let dataset = Dataset::from_observed(exposure.clone(), data.y.clone(), z, c)?;

    let covariate_cols = |ds: &Dataset| -> Vec<(String, DVector<f64>)> {
        data.covariate_names
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), ds.c.column(j).into_owned()))
            .collect()
    };
    let mut local_cols = vec![("z".to_string(), dataset.z.clone())];
    local_cols.extend(covariate_cols(&dataset));
    let mut both_cols = vec![
        ("z".to_string(), dataset.z.clone()),
        ("zbar".to_string(), dataset.zbar.clone()),
    ];
    both_cols.extend(covariate_cols(&dataset));
    let mut rows = vec![
        ols_row("OLS, local exposure", &dataset.y, local_cols)?,
        ols_row("OLS, local and neighborhood", &dataset.y, both_cols)?,
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for &degree in &options.gh_degrees {
        let gh = graph_of_degree(&base, degree)?;
        let priors = default_priors(&dataset, &gh)?;
        let model = Model::new(
            ModelData::from_dataset(&dataset).with_gh_adjacency(gh)?,
            priors,
        )?;
        let fit = fit_chains(&model, &options.chain, options.n_chains, rng.random())?;
        if !fit.converged() {
            log::warn!(
                "degree-{degree} fit did not pass the R-hat gate ({:.3}, {:.3})",
                fit.rhat_beta_z,
                fit.rhat_beta_zbar
            );
        }
        let interval = |name: &str| -> Result<EffectInterval> {
            let s = fit.summary(name)?;
            Ok(EffectInterval {
                estimate: s.mean,
                lower: s.lower,
                upper: s.upper,
            })
        };
        let label = if degree == 1 { "first" } else { "second" };
        rows.push(AnalysisRow {
            method: format!("Bayes, {label}-degree precision graph"),
            local: interval("beta_z")?,
            interference: Some(interval("beta_zbar")?),
            rhat: Some((fit.rhat_beta_z, fit.rhat_beta_zbar)),
        });
    }
    Ok(AnalysisReport {
        n_input: graph.n(),
        dropped: dropped.iter().map(|i| i + 1).collect(),
        covariates: data.covariate_names.clone(),
        rows,
    })
}

/// Reads the CSV and edge list and runs [`analyze`]. The edge list's
/// `# units N` header, when present, must match the number of rows.
pub fn analyze_csv(
    data_path: &Path,
    edges_path: &Path,
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let data = read_observed_csv(data_path, options.covariates.as_deref())?;
    if let Some(units) = crate::spatial::edge_list_unit_count(edges_path)? {
        if units != data.n() {
            return Err(invalid(format!(
                "edge list declares {units} units but the data have {} rows",
                data.n()
            )));
        }
    }
    let graph = AdjacencyStructure::read_edge_file(edges_path, Some(data.n()))?;
    analyze(&data, &graph, options)
}

/// Symmetrized `k`-nearest-neighbor graph on uniform points in the unit
/// square: a connected-looking, roughly planar stand-in for a map of
/// administrative regions.
pub fn knn_graph<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<AdjacencyStructure> {
    if k == 0 || k >= n {
        return Err(invalid(format!("need 0 < k < n, got k = {k}, n = {n}")));
    }
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        let mut order: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                (
                    (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2),
                    j,
                )
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        edges.extend(order[..k].iter().map(|&(_, j)| (i.min(j), i.max(j))));
    }
    edges.sort_unstable();
    edges.dedup();
    AdjacencyStructure::from_edges(n, &edges)
}

/// Units in the synthetic stand-in for the county data.
pub const STANDIN_UNITS: usize = 445;

/// Synthetic stand-in for an observational study: scenario 2f parameters
/// on a 5-nearest-neighbor graph, with exposure and confounder averaged over
/// second-degree neighbors. Returns the data and the first-degree graph.
pub fn generate_standin(n: usize, seed: u64) -> Result<(ObservedData, AdjacencyStructure)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = knn_graph(n, 5, &mut rng)?;
    let cfg = ScenarioConfig::network(Scenario::F);
    let p = cfg.n_covariates();
    let c = generate_covariates(n, p, &mut rng);
    let (u, z) = sample_joint_uz(&graph, &cfg, &c, &mut rng)?;
    let second = graph.second_degree();
    let zbar = second.neighbor_average(&z)?;
    let ubar = second.neighbor_average(&u)?;
    let y = sample_outcome(&cfg, &z, &zbar, &c, &u, &ubar, &mut rng)?;
    Ok((
        ObservedData {
            y,
            z,
            c,
            covariate_names: (1..=p).map(|j| format!("c{j}")).collect(),
        },
        graph,
    ))
}

/// Writes observed data as a headed CSV with a leading `unit` label column.
pub fn write_observed_csv(data: &ObservedData, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit".to_string(), "y".into(), "z".into()];
    header.extend(data.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![
            format!("unit{:04}", i + 1),
            data.y[i].to_string(),
            data.z[i].to_string(),
        ];
        rec.extend(data.c.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
