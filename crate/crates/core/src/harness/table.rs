//! Aggregated replication results and their CSV and markdown forms.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// A point estimate with its 95% interval from one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Estimate {
    pub fn covers(&self, truth: f64) -> bool {
        self.lower <= truth && truth <= self.upper
    }
}

/// Monte Carlo summary of one coefficient across replications. Fields are
/// NaN when the coefficient was not estimated (for example `beta_zbar`
/// under a conditioning set without the neighborhood exposure).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectStats {
    pub bias: f64,
    pub rmse: f64,
    /// Percentage of intervals containing the true value.
    pub coverage: f64,
    /// Monte Carlo standard error of `bias`.
    pub mc_se: f64,
    /// Mean interval half-width.
    pub half_width: f64,
}

impl EffectStats {
    pub const MISSING: Self = Self {
        bias: f64::NAN,
        rmse: f64::NAN,
        coverage: f64::NAN,
        mc_se: f64::NAN,
        half_width: f64::NAN,
    };

    pub fn from_estimates(estimates: &[Estimate], truth: f64) -> Self {
        if estimates.is_empty() {
            return Self::MISSING;
        }
        let k = estimates.len() as f64;
        let errors: Vec<f64> = estimates.iter().map(|e| e.value - truth).collect();
        let bias = errors.iter().sum::<f64>() / k;
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / k).sqrt();
        let mc_se = if estimates.len() > 1 {
            (errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        } else {
            f64::NAN
        };
        let covered = estimates.iter().filter(|e| e.covers(truth)).count() as f64;
        let half_width = estimates
            .iter()
            .map(|e| (e.upper - e.lower) / 2.0)
            .sum::<f64>()
            / k;
        Self {
            bias,
            rmse,
            coverage: 100.0 * covered / k,
            mc_se,
            half_width,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.bias.is_nan()
    }

    /// A bias several interval half-widths away from the truth cannot
    /// coexist with majority coverage.
    pub fn coverage_consistent(&self) -> bool {
        self.is_missing() || self.bias.abs() <= 3.0 * self.half_width || self.coverage < 50.0
    }

    fn values(&self) -> [f64; 5] {
        [
            self.bias,
            self.rmse,
            self.coverage,
            self.mc_se,
            self.half_width,
        ]
    }
}

/// One method (or conditioning set) under one scenario, variation and size.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Scenario id such as `2a`.
    pub scenario: String,
    /// Parameter change within the scenario, e.g. `phi_z=0.7`; empty for the default.
    pub variation: String,
    /// `ols` or `bayes`.
    pub method: String,
    /// Conditioning set for OLS rows, `joint` for the Bayesian model.
    pub model: String,
    pub n: usize,
    pub n_reps: usize,
    /// Replications that entered the aggregates.
    pub n_converged: usize,
    /// Replications whose fit returned an error.
    pub n_failed: usize,
    pub local: EffectStats,
    pub interference: EffectStats,
}

impl ResultRow {
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol;
        self.scenario == other.scenario
            && self.variation == other.variation
            && self.method == other.method
            && self.model == other.model
            && self.n == other.n
            && self.n_reps == other.n_reps
            && self.n_converged == other.n_converged
            && self.n_failed == other.n_failed
            && self
                .local
                .values()
                .iter()
                .chain(self.interference.values().iter())
                .zip(
                    other
                        .local
                        .values()
                        .iter()
                        .chain(other.interference.values().iter()),
                )
                .all(|(a, b)| close(*a, *b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl TableFormat {
    /// `.md` selects markdown, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("md") | Some("markdown") => TableFormat::Markdown,
            _ => TableFormat::Csv,
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "md" | "markdown" => Ok(TableFormat::Markdown),
            other => Err(invalid(format!("unknown table format `{other}`"))),
        }
    }
}

const COLUMNS: [&str; 18] = [
    "scenario",
    "variation",
    "method",
    "model",
    "n",
    "n_reps",
    "n_converged",
    "n_failed",
    "bias_z",
    "rmse_z",
    "coverage_z",
    "mcse_z",
    "halfwidth_z",
    "bias_zbar",
    "rmse_zbar",
    "coverage_zbar",
    "mcse_zbar",
    "halfwidth_zbar",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// First row matching scenario, variation and model label.
    pub fn find(&self, scenario: &str, variation: &str, model: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.variation == variation && r.model == model)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.approx_eq(b, tol))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            let mut rec = vec![
                r.scenario.clone(),
                r.variation.clone(),
                r.method.clone(),
                r.model.clone(),
                r.n.to_string(),
                r.n_reps.to_string(),
                r.n_converged.to_string(),
                r.n_failed.to_string(),
            ];
            rec.extend(
                r.local
                    .values()
                    .iter()
                    .chain(r.interference.values().iter())
                    .map(|v| v.to_string()),
            );
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(text: &str, origin: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != COLUMNS {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                message: format!("unexpected header `{}`", header.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line,
                message,
            };
            let count = |j: usize| {
                rec[j]
                    .parse::<usize>()
                    .map_err(|e| err(format!("{}: {e}", COLUMNS[j])))
            };
            let num = |j: usize| {
                rec[j]
                    .parse::<f64>()
                    .map_err(|e| err(format!("{}: {e}", COLUMNS[j])))
            };
            let stats = |j: usize| -> Result<EffectStats> {
                Ok(EffectStats {
                    bias: num(j)?,
                    rmse: num(j + 1)?,
                    coverage: num(j + 2)?,
                    mc_se: num(j + 3)?,
                    half_width: num(j + 4)?,
                })
            };
            rows.push(ResultRow {
                scenario: rec[0].to_string(),
                variation: rec[1].to_string(),
                method: rec[2].to_string(),
                model: rec[3].to_string(),
                n: count(4)?,
                n_reps: count(5)?,
                n_converged: count(6)?,
                n_failed: count(7)?,
                local: stats(8)?,
                interference: stats(13)?,
            });
        }
        Ok(Self { rows })
    }

    /// Pipe table grouped by scenario: the scenario id is printed on the
    /// first row of each group only.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "| Scenario | Change | n | Method | Model | Local bias | Local rMSE | Local cover | \
             Interf. bias | Interf. rMSE | Interf. cover | Used |\n",
        );
        out.push_str("|---|---|---:|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
        let fmt3 = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                format!("{v:.3}")
            }
        };
        let fmt1 = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                format!("{v:.1}")
            }
        };
        let mut previous: Option<&str> = None;
        for r in &self.rows {
            let scenario = if previous == Some(r.scenario.as_str()) {
                ""
            } else {
                r.scenario.as_str()
            };
            previous = Some(r.scenario.as_str());
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {}/{} |",
                scenario,
                r.variation,
                r.n,
                r.method,
                r.model,
                fmt3(r.local.bias),
                fmt3(r.local.rmse),
                fmt1(r.local.coverage),
                fmt3(r.interference.bias),
                fmt3(r.interference.rmse),
                fmt1(r.interference.coverage),
                r.n_converged,
                r.n_reps,
            )
            .unwrap();
        }
        out
    }
}

/// Writes `table` in the requested format.
pub fn write_table(table: &ResultTable, path: &Path, format: TableFormat) -> Result<()> {
    let text = match format {
        TableFormat::Csv => table.to_csv_string()?,
        TableFormat::Markdown => table.to_markdown(),
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a table written by [`write_table`] in CSV form.
pub fn read_table(path: &Path) -> Result<ResultTable> {
    ResultTable::from_csv_str(&std::fs::read_to_string(path)?, path)
}
