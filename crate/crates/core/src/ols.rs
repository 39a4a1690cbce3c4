//! Ordinary least squares over configurable conditioning sets, with
//! normal-theory 95% intervals.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::datagen::Dataset;
use crate::error::{invalid, Error, Result};

/// Normal 97.5% quantile used for 95% intervals.
pub const Z_975: f64 = 1.959963984540054;

/// Relative tolerance on `|R_jj|` below which a column counts as collinear.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Which regressors enter the outcome model besides the intercept and `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConditioningSet {
    pub include_zbar: bool,
    pub include_u: bool,
    pub include_ubar: bool,
    pub include_c: bool,
}

impl ConditioningSet {
    pub const Z: Self = Self::new(false, false, false);
    pub const Z_U: Self = Self::new(false, true, false);
    pub const Z_ZBAR: Self = Self::new(true, false, false);
    pub const Z_ZBAR_U: Self = Self::new(true, true, false);
    pub const Z_ZBAR_U_UBAR: Self = Self::new(true, true, true);

    /// The five sets of the motivating tables, in column order.
    pub const MOTIVATING: [Self; 5] = [
        Self::Z,
        Self::Z_U,
        Self::Z_ZBAR,
        Self::Z_ZBAR_U,
        Self::Z_ZBAR_U_UBAR,
    ];

    pub const fn new(include_zbar: bool, include_u: bool, include_ubar: bool) -> Self {
        Self {
            include_zbar,
            include_u,
            include_ubar,
            include_c: true,
        }
    }

    pub const fn without_covariates(self) -> Self {
        Self {
            include_c: false,
            ..self
        }
    }

    /// Always true: the local exposure is the effect of interest.
    pub fn include_z(&self) -> bool {
        true
    }

    pub fn label(&self) -> String {
        let mut parts = vec!["Z"];
        if self.include_zbar {
            parts.push("Zbar");
        }
        if self.include_u {
            parts.push("U");
        }
        if self.include_ubar {
            parts.push("Ubar");
        }
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for ConditioningSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for ConditioningSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let mut set = Self::new(false, false, false);
        let mut has_z = false;
        for tok in inner.split(',').map(|t| t.trim().to_ascii_lowercase()) {
            match tok.as_str() {
                "z" => has_z = true,
                "zbar" => set.include_zbar = true,
                "u" => set.include_u = true,
                "ubar" => set.include_ubar = true,
                "c" | "" => {}
                other => return Err(invalid(format!("unknown regressor `{other}` in `{s}`"))),
            }
        }
        if !has_z {
            return Err(invalid(format!("conditioning set `{s}` must contain Z")));
        }
        Ok(set)
    }
}

/// A design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(invalid(format!(
                "{} names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        Ok(Self { x, names })
    }

    /// Intercept followed by the given named columns.
    pub fn with_intercept(columns: &[(&str, &DVector<f64>)]) -> Result<Self> {
        let n = columns.first().map_or(0, |(_, v)| v.len());
        if columns.iter().any(|(_, v)| v.len() != n) {
            return Err(invalid("design columns have different lengths"));
        }
        let mut x = DMatrix::from_element(n, columns.len() + 1, 1.0);
        let mut names = vec!["intercept".to_string()];
        for (j, (name, v)) in columns.iter().enumerate() {
            x.set_column(j + 1, v);
            names.push((*name).to_string());
        }
        Ok(Self { x, names })
    }
}

/// Intercept, `z`, then `zbar`, `u`, `ubar`, and covariates as requested.
pub fn build_design(dataset: &Dataset, cond: &ConditioningSet) -> Result<DesignMatrix> {
    let n = dataset.n();
    let mut cols: Vec<(String, DVector<f64>)> = vec![
        ("intercept".into(), DVector::from_element(n, 1.0)),
        ("z".into(), dataset.z.clone()),
    ];
    if cond.include_zbar {
        cols.push(("zbar".into(), dataset.zbar.clone()));
    }
    if cond.include_u {
        let u = dataset
            .u
            .as_ref()
            .ok_or_else(|| Error::MissingColumn("u".into()))?;
        cols.push(("u".into(), u.clone()));
    }
    if cond.include_ubar {
        let ub = dataset
            .ubar
            .as_ref()
            .ok_or_else(|| Error::MissingColumn("ubar".into()))?;
        cols.push(("ubar".into(), ub.clone()));
    }
    if cond.include_c {
        for j in 0..dataset.p() {
            cols.push((format!("c{}", j + 1), dataset.c.column(j).into_owned()));
        }
    }
    let x = DMatrix::from_columns(&cols.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>());
    DesignMatrix::new(x, cols.into_iter().map(|(name, _)| name).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub standard_errors: DVector<f64>,
    pub ci_lower: DVector<f64>,
    pub ci_upper: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `RSS / (n - k)`.
    pub residual_variance: f64,
    pub n: usize,
    pub k: usize,
}

impl OlsFit {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index(name).map(|j| self.coefficients[j])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index(name).map(|j| self.standard_errors[j])
    }

    pub fn ci(&self, name: &str) -> Option<(f64, f64)> {
        self.index(name)
            .map(|j| (self.ci_lower[j], self.ci_upper[j]))
    }
}

/// Least squares by Householder QR.
pub fn fit_ols(y: &DVector<f64>, design: &DesignMatrix) -> Result<OlsFit> {
    let x = &design.x;
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(invalid(format!(
            "y has {} entries, design has {n} rows",
            y.len()
        )));
    }
    if n <= k {
        return Err(Error::InsufficientData { n, k });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(j) = (0..k).find(|&j| r[(j, j)].abs() <= RANK_TOLERANCE * max_diag) {
        return Err(Error::Collinear {
            column: design.names[j].clone(),
        });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let mut beta = qty.rows(0, k).into_owned();
    if !r.solve_upper_triangular_mut(&mut beta) {
        return Err(Error::Collinear {
            column: design.names[k - 1].clone(),
        });
    }
    let residuals = y - x * &beta;
    let rss = residuals.norm_squared();
    let residual_variance = rss / (n - k) as f64;
    // diag((X'X)^-1) = squared row norms of R^-1
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Collinear {
            column: design.names[k - 1].clone(),
        })?;
    let standard_errors = DVector::from_fn(k, |j, _| {
        (residual_variance * r_inv.row(j).norm_squared()).sqrt()
    });
    let half = &standard_errors * Z_975;
    Ok(OlsFit {
        names: design.names.clone(),
        ci_lower: &beta - &half,
        ci_upper: &beta + &half,
        coefficients: beta,
        standard_errors,
        residuals,
        residual_variance,
        n,
        k,
    })
}

/// Residual variance `RSS / (n - k)` of `y` on an intercept plus `columns`.
pub fn residual_variance(y: &DVector<f64>, columns: &[(&str, &DVector<f64>)]) -> Result<f64> {
    Ok(fit_ols(y, &DesignMatrix::with_intercept(columns)?)?.residual_variance)
}
