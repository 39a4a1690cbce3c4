use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::datagen::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{envelope_for, reverse_cuthill_mckee, Cholesky, SymmetricEnvelope};
use crate::spatial::{
    car_precision, joint_precision, AdjacencyStructure, CarSpectrum, PrecisionKind,
};

use super::{McmcState, PriorConfig};

/// Observed data plus the two graphs the model uses: `exposure` defines the
/// neighborhood averages, `gh` defines the CAR precisions `G` and `H`.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub zbar: DVector<f64>,
    pub c: DMatrix<f64>,
    pub exposure: AdjacencyStructure,
    pub gh: AdjacencyStructure,
}

impl ModelData {
    /// Uses the dataset's graph for both roles.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self {
            y: dataset.y.clone(),
            z: dataset.z.clone(),
            zbar: dataset.zbar.clone(),
            c: dataset.c.clone(),
            exposure: dataset.adjacency.clone(),
            gh: dataset.adjacency.clone(),
        }
    }

    pub fn with_gh_adjacency(mut self, gh: AdjacencyStructure) -> Result<Self> {
        if gh.n() != self.y.len() {
            return Err(invalid(format!(
                "precision graph has {} units but the data has {}",
                gh.n(),
                self.y.len()
            )));
        }
        self.gh = gh;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.c.ncols()
    }
}

/// Parameter blocks of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// `(b0, bZ, bZbar, bUbar, bC)`.
    Beta,
    SigmaY2,
    /// `(g0, gC)`.
    Gamma,
    /// The latent confounder `U`.
    Latent,
    /// `U` together with `(b0, bZ, bZbar, bC)` and `(g0, gC)`, which are
    /// jointly Gaussian given `bUbar`, the residual variance and the
    /// hyperparameters.
    Joint,
    /// `(tau_u, tau_z, phi_u, phi_z, rho)`.
    Hyper,
}

impl Block {
    pub const ALL: [Block; 6] = [
        Block::Beta,
        Block::SigmaY2,
        Block::Gamma,
        Block::Latent,
        Block::Joint,
        Block::Hyper,
    ];
}

/// Sufficient statistics of `(U, W)` with `W = Z - mean(Z | C)` on the CAR graph.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CarStats {
    sdu: f64,
    uau: f64,
    sdw: f64,
    waw: f64,
    sduw: f64,
}

impl CarStats {
    /// `(u, w)^T P (u, w)`.
    pub(crate) fn quad(&self, h: [f64; 5]) -> f64 {
        let [tu, tz, pu, pz, rho] = h;
        tu * tu * (self.sdu - pu * self.uau) + tz * tz * (self.sdw - pz * self.waw)
            - 2.0 * rho * tu * tz * self.sduw
    }
}

/// Fixed sparsity of the latent block's precision, in reverse Cuthill-McKee order.
#[derive(Debug, Clone)]
struct LatentPattern {
    order: Vec<usize>,
    first: Vec<usize>,
    /// Per unit: CAR degree and `sum over exposure neighbors i of 1 / d_i^2`.
    diag: Vec<(f64, f64)>,
    /// `(row, col)` in new order with row > col, then CAR adjacency,
    /// `(Abar + Abar^T)` and `Abar^T Abar` entries.
    off: Vec<(usize, usize, f64, f64, f64)>,
}

impl LatentPattern {
    fn new(exposure: &AdjacencyStructure, gh: &AdjacencyStructure) -> Result<Self> {
        let n = gh.n();
        let inv_deg: Vec<f64> = exposure
            .degrees()
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 })
            .collect();
        let mut entries: BTreeMap<(usize, usize), [f64; 3]> = BTreeMap::new();
        for (i, j) in gh.edges() {
            entries.entry((j, i)).or_default()[0] += 1.0;
        }
        for (i, j) in exposure.edges() {
            entries.entry((j, i)).or_default()[1] += inv_deg[i] + inv_deg[j];
        }
        let mut diag_sq = vec![0.0; n];
        for i in 0..n {
            let nb = exposure.neighbors(i);
            let w = inv_deg[i] * inv_deg[i];
            for (a, &j) in nb.iter().enumerate() {
                diag_sq[j] += w;
                for &k in &nb[..a] {
                    entries.entry((j.max(k), j.min(k))).or_default()[2] += w;
                }
            }
        }
        let mut union = vec![Vec::new(); n];
        for &(j, k) in entries.keys() {
            union[j].push(k);
            union[k].push(j);
        }
        let order = reverse_cuthill_mckee(&union);
        let first = envelope_for(&union, &order);
        let mut position = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let off = entries
            .into_iter()
            .map(|((j, k), [a, s, q])| {
                let (pj, pk) = (position[j], position[k]);
                (pj.max(pk), pj.min(pk), a, s, q)
            })
            .collect();
        let diag = (0..n).map(|i| (gh.degree(i) as f64, diag_sq[i])).collect();
        Ok(Self {
            order,
            first,
            diag,
            off,
        })
    }

    /// `G + sigma^{-2} (I + b (Abar + Abar^T) + b^2 Abar^T Abar)` in new order.
    fn precision(&self, tau_u: f64, phi_u: f64, inv_sigma2: f64, b: f64) -> SymmetricEnvelope {
        let mut env = SymmetricEnvelope::with_first(self.first.clone())
            .expect("envelope built from a valid ordering");
        self.fill(&mut env, tau_u, phi_u, inv_sigma2, b);
        env
    }

    /// Adds the latent precision into the leading `n x n` block of `env`.
    fn fill(&self, env: &mut SymmetricEnvelope, tau_u: f64, phi_u: f64, inv_sigma2: f64, b: f64) {
        let t2 = tau_u * tau_u;
        for (p, &unit) in self.order.iter().enumerate() {
            let (d, sq) = self.diag[unit];
            env.add(p, p, t2 * d + inv_sigma2 * (1.0 + b * b * sq));
        }
        for &(r, c, a, s, q) in &self.off {
            env.add(r, c, -t2 * phi_u * a + inv_sigma2 * (b * s + b * b * q));
        }
    }
}

/// State-independent pieces of the joint block, with unit-indexed vectors
/// in envelope order.
#[derive(Debug, Clone)]
struct JointConstants {
    /// Columns of `[1, Z, Zbar, C]` and their images under `Abar^T`.
    outcome_cols: Vec<Vec<f64>>,
    outcome_back: Vec<Vec<f64>>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    /// `D` times each column of `[1, C]`.
    gamma_cols_deg: Vec<Vec<f64>>,
    xg_d_xg: DMatrix<f64>,
    xg_a_xg: DMatrix<f64>,
    xg_dz: DVector<f64>,
    xg_az: DVector<f64>,
    y: Vec<f64>,
    y_back: Vec<f64>,
    z_deg: Vec<f64>,
}

impl JointConstants {
    fn new(
        data: &ModelData,
        x_outcome: &DMatrix<f64>,
        x_gamma: &DMatrix<f64>,
        order: &[usize],
    ) -> Self {
        let perm = |v: &[f64]| -> Vec<f64> { order.iter().map(|&i| v[i]).collect() };
        let deg: Vec<f64> = data.gh.degrees().iter().map(|&d| d as f64).collect();
        let scale_deg = |v: &[f64]| -> DVector<f64> {
            DVector::from_iterator(v.len(), v.iter().zip(&deg).map(|(a, d)| a * d))
        };
        let adj_apply = |v: &[f64]| -> DVector<f64> {
            DVector::from_iterator(
                v.len(),
                (0..v.len()).map(|i| data.gh.neighbors(i).iter().map(|&j| v[j]).sum()),
            )
        };
        let e = &data.exposure;
        let outcome_cols = x_outcome
            .column_iter()
            .map(|c| perm(c.as_slice()))
            .collect();
        let outcome_back = x_outcome
            .column_iter()
            .map(|c| perm(e.average_transpose(c.as_slice()).as_slice()))
            .collect();
        let kg = x_gamma.ncols();
        let d_xg = DMatrix::from_columns(
            &x_gamma
                .column_iter()
                .map(|c| scale_deg(c.as_slice()))
                .collect::<Vec<_>>(),
        );
        let a_xg = DMatrix::from_columns(
            &x_gamma
                .column_iter()
                .map(|c| adj_apply(c.as_slice()))
                .collect::<Vec<_>>(),
        );
        let z = data.z.as_slice();
        Self {
            outcome_cols,
            outcome_back,
            xtx: x_outcome.tr_mul(x_outcome),
            xty: x_outcome.tr_mul(&data.y),
            gamma_cols_deg: (0..kg).map(|a| perm(d_xg.column(a).as_slice())).collect(),
            xg_d_xg: x_gamma.tr_mul(&d_xg),
            xg_a_xg: x_gamma.tr_mul(&a_xg),
            xg_dz: x_gamma.tr_mul(&scale_deg(z)),
            xg_az: x_gamma.tr_mul(&adj_apply(z)),
            y: perm(data.y.as_slice()),
            y_back: perm(e.average_transpose(data.y.as_slice()).as_slice()),
            z_deg: perm(scale_deg(z).as_slice()),
        }
    }
}

/// Posterior of the spatial-confounding model for one dataset.
#[derive(Debug, Clone)]
pub struct Model {
    data: ModelData,
    priors: PriorConfig,
    spectrum: CarSpectrum,
    gh_degree: Vec<f64>,
    x_gamma: DMatrix<f64>,
    latent: LatentPattern,
    joint: JointConstants,
}

fn sample_gaussian<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = Cholesky::new(precision)?;
    let mut x = linear.clone();
    chol.solve_lower_mut(x.as_mut_slice());
    for v in x.iter_mut() {
        *v += std_normal(rng);
    }
    chol.solve_upper_mut(x.as_mut_slice());
    Ok(x)
}

pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `x^T M x` for a symmetric matrix in envelope storage.
fn envelope_quad(env: &SymmetricEnvelope, x: &[f64]) -> f64 {
    let mut quad = 0.0;
    for (i, &f) in env.first().iter().enumerate() {
        quad += env.get(i, i) * x[i] * x[i];
        for j in f..i {
            quad += 2.0 * env.get(i, j) * x[i] * x[j];
        }
    }
    quad
}

fn gaussian_kernel(precision: &DMatrix<f64>, linear: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    -0.5 * (theta.transpose() * precision * theta)[(0, 0)] + theta.dot(linear)
}

impl Model {
    pub fn new(data: ModelData, priors: PriorConfig) -> Result<Self> {
        let n = data.n();
        if data.z.len() != n || data.zbar.len() != n || data.c.nrows() != n {
            return Err(invalid("data columns have different lengths"));
        }
        if data.exposure.n() != n || data.gh.n() != n {
            return Err(invalid("graph size does not match the data"));
        }
        let spectrum = CarSpectrum::new(&data.gh)?;
        let gh_degree = data.gh.degrees().iter().map(|&d| d as f64).collect();
        let mut x_gamma = DMatrix::from_element(n, data.p() + 1, 1.0);
        x_gamma.view_mut((0, 1), (n, data.p())).copy_from(&data.c);
        let latent = LatentPattern::new(&data.exposure, &data.gh)?;
        let mut x_outcome = DMatrix::from_element(n, data.p() + 3, 1.0);
        x_outcome.set_column(1, &data.z);
        x_outcome.set_column(2, &data.zbar);
        x_outcome.view_mut((0, 3), (n, data.p())).copy_from(&data.c);
        let joint = JointConstants::new(&data, &x_outcome, &x_gamma, &latent.order);
        Ok(Self {
            data,
            priors,
            spectrum,
            gh_degree,
            x_gamma,
            latent,
            joint,
        })
    }

    pub fn data(&self) -> &ModelData {
        &self.data
    }

    pub fn priors(&self) -> &PriorConfig {
        &self.priors
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn spectrum(&self) -> &CarSpectrum {
        &self.spectrum
    }

    /// Errors unless the state has the right shapes, lies in the parameter
    /// space, and gives a positive definite joint precision.
    pub fn validate_state(&self, s: &McmcState) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidState(m));
        if s.u.len() != self.n() || s.beta_c.len() != self.p() || s.gamma_c.len() != self.p() {
            return bad("state dimensions do not match the data".into());
        }
        if !(s.sigma_y2 > 0.0 && s.tau_u > 0.0 && s.tau_z > 0.0) {
            return bad("variance and precision scales must be positive".into());
        }
        if !(s.phi_u > 0.0 && s.phi_u < s.phi_z && s.phi_z < 1.0) {
            return bad(format!(
                "need 0 < phi_u < phi_z < 1, got phi_u {} and phi_z {}",
                s.phi_u, s.phi_z
            ));
        }
        if !(s.rho.abs() < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", s.rho));
        }
        if !self.spectrum.is_positive_definite(s.phi_u, s.phi_z, s.rho) {
            return bad("joint precision is not positive definite".into());
        }
        Ok(())
    }

    fn outcome_offset(&self, s: &McmcState) -> DVector<f64> {
        let d = &self.data;
        let mut r = &d.y - &d.z * s.beta_z - &d.zbar * s.beta_zbar;
        r.add_scalar_mut(-s.beta0);
        r -= &d.c * DVector::from_column_slice(&s.beta_c);
        r
    }

    pub(crate) fn exposure_residual(&self, s: &McmcState) -> DVector<f64> {
        &self.data.z - &self.x_gamma * DVector::from_vec(s.gamma_vector())
    }

    fn outcome_residual(&self, s: &McmcState, ubar: &DVector<f64>) -> DVector<f64> {
        self.outcome_offset(s) - &s.u - ubar * s.beta_ubar
    }

    pub(crate) fn car_stats(&self, u: &DVector<f64>, w: &DVector<f64>) -> CarStats {
        let g = &self.data.gh;
        let deg = &self.gh_degree;
        let (u, w) = (u.as_slice(), w.as_slice());
        CarStats {
            sdu: (0..u.len()).map(|i| deg[i] * u[i] * u[i]).sum(),
            uau: g.bilinear(u, u),
            sdw: (0..u.len()).map(|i| deg[i] * w[i] * w[i]).sum(),
            waw: g.bilinear(w, w),
            sduw: (0..u.len()).map(|i| deg[i] * u[i] * w[i]).sum(),
        }
    }

    /// Log posterior of the hyperparameters given the current `(U, Z)`
    /// statistics, up to a constant; `-inf` outside the support.
    pub(crate) fn hyper_target(&self, h: [f64; 5], stats: &CarStats) -> f64 {
        let prior = self.priors.log_prior_hyper(h);
        if !prior.is_finite() || !(h[2] > 0.0) {
            return f64::NEG_INFINITY;
        }
        match self.spectrum.joint_log_det(h[0], h[1], h[2], h[3], h[4]) {
            Some(ld) => 0.5 * ld - 0.5 * stats.quad(h) + prior,
            None => f64::NEG_INFINITY,
        }
    }

    fn outcome_log_lik(&self, s: &McmcState, resid: &DVector<f64>) -> f64 {
        -0.5 * self.n() as f64 * s.sigma_y2.ln() - 0.5 * resid.norm_squared() / s.sigma_y2
    }

    /// Log posterior density up to a constant, using the graph spectrum for
    /// `log det P` and sparse products for the quadratic form.
    pub fn log_joint(&self, s: &McmcState) -> Result<f64> {
        self.validate_state(s)?;
        let ubar = self.data.exposure.average_unchecked(s.u.as_slice());
        let resid = self.outcome_residual(s, &ubar);
        let w = self.exposure_residual(s);
        let stats = self.car_stats(&s.u, &w);
        Ok(self.outcome_log_lik(s, &resid)
            + self.hyper_target(s.hyper(), &stats)
            + self.priors.log_prior_coefficients(s))
    }

    /// Same density as [`log_joint`](Self::log_joint), assembled from dense
    /// matrices and a dense Cholesky factorization of the joint precision.
    pub fn log_joint_dense(&self, s: &McmcState) -> Result<f64> {
        self.validate_state(s)?;
        let n = self.n();
        let e = &self.data.exposure;
        let mut avg = e.matrix();
        for i in 0..n {
            let d = e.degree(i);
            if d > 0 {
                avg.row_mut(i).scale_mut(1.0 / d as f64);
            }
        }
        let resid = self.outcome_residual(s, &(&avg * &s.u));
        let to_state = |e: Error| Error::InvalidState(e.to_string());
        let g = car_precision(&self.data.gh, s.tau_u, s.phi_u, PrecisionKind::ConditionalU)
            .map_err(to_state)?;
        let h = car_precision(&self.data.gh, s.tau_z, s.phi_z, PrecisionKind::ConditionalZ)
            .map_err(to_state)?;
        let joint = joint_precision(&g, &h, s.rho).map_err(to_state)?;
        let w = &self.data.z - &self.x_gamma * DVector::from_vec(s.gamma_vector());
        let x: Vec<f64> = s.u.iter().chain(w.iter()).copied().collect();
        let quad = joint.cholesky().quad_form(&x);
        Ok(
            self.outcome_log_lik(s, &resid) + 0.5 * joint.log_det() - 0.5 * quad
                + self.priors.log_prior_hyper(s.hyper())
                + self.priors.log_prior_coefficients(s),
        )
    }

    fn beta_design(&self, ubar: &DVector<f64>) -> DMatrix<f64> {
        let d = &self.data;
        let n = self.n();
        let mut x = DMatrix::from_element(n, 4 + self.p(), 1.0);
        x.set_column(1, &d.z);
        x.set_column(2, &d.zbar);
        x.set_column(3, ubar);
        x.view_mut((0, 4), (n, self.p())).copy_from(&d.c);
        x
    }

    fn beta_conditional(&self, s: &McmcState) -> (DMatrix<f64>, DVector<f64>) {
        let ubar = self.data.exposure.average_unchecked(s.u.as_slice());
        let x = self.beta_design(&ubar);
        let target = &self.data.y - &s.u;
        let inv_s2 = 1.0 / s.sigma_y2;
        let mut precision = x.tr_mul(&x) * inv_s2;
        for j in 0..precision.nrows() {
            let v = if j == 3 {
                self.priors.sigma2_prior_ubar
            } else {
                self.priors.sigma2_prior
            };
            precision[(j, j)] += 1.0 / v;
        }
        (precision, x.tr_mul(&target) * inv_s2)
    }

    fn sigma2_conditional(&self, s: &McmcState) -> (f64, f64) {
        let ubar = self.data.exposure.average_unchecked(s.u.as_slice());
        let rss = self.outcome_residual(s, &ubar).norm_squared();
        (
            self.priors.alpha_y + 0.5 * self.n() as f64,
            self.priors.beta_y + 0.5 * rss,
        )
    }

    /// `(tau^2 (D - phi A)) v` on the CAR graph.
    fn car_apply(&self, tau: f64, phi: f64, v: &[f64]) -> DVector<f64> {
        let g = &self.data.gh;
        DVector::from_iterator(
            v.len(),
            (0..v.len()).map(|i| {
                let nb: f64 = g.neighbors(i).iter().map(|&j| v[j]).sum();
                tau * tau * (self.gh_degree[i] * v[i] - phi * nb)
            }),
        )
    }

    fn gamma_conditional(&self, s: &McmcState) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.p() + 1;
        let mut hx = DMatrix::zeros(self.n(), k);
        for j in 0..k {
            let col: Vec<f64> = self.x_gamma.column(j).iter().copied().collect();
            hx.set_column(j, &self.car_apply(s.tau_z, s.phi_z, &col));
        }
        let mut precision = self.x_gamma.tr_mul(&hx);
        for j in 0..k {
            precision[(j, j)] += 1.0 / self.priors.sigma2_prior;
        }
        let q = -s.rho * s.tau_u * s.tau_z;
        let mut rhs = self.car_apply(s.tau_z, s.phi_z, self.data.z.as_slice());
        for i in 0..self.n() {
            rhs[i] += q * self.gh_degree[i] * s.u[i];
        }
        (precision, self.x_gamma.tr_mul(&rhs))
    }

    /// Latent-block precision (new order) and linear term (original order).
    fn latent_conditional(&self, s: &McmcState) -> (SymmetricEnvelope, DVector<f64>) {
        let inv_s2 = 1.0 / s.sigma_y2;
        let b = s.beta_ubar;
        let env = self.latent.precision(s.tau_u, s.phi_u, inv_s2, b);
        let r0 = self.outcome_offset(s);
        let back = self.data.exposure.average_transpose(r0.as_slice());
        let w = self.exposure_residual(s);
        let pull = s.rho * s.tau_u * s.tau_z;
        let linear = DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|i| inv_s2 * (r0[i] + b * back[i]) + pull * self.gh_degree[i] * w[i]),
        );
        (env, linear)
    }

    /// `(U, b0, bZ, bZbar, bC, g0, gC)` with `U` in envelope order.
    fn joint_vector(&self, s: &McmcState) -> Vec<f64> {
        let mut x = self.permute(&s.u);
        x.extend([s.beta0, s.beta_z, s.beta_zbar]);
        x.extend(&s.beta_c);
        x.extend(s.gamma_vector());
        x
    }

    fn set_joint_vector(&self, s: &mut McmcState, x: &[f64]) {
        let n = self.n();
        let p = self.p();
        for (k, &old) in self.latent.order.iter().enumerate() {
            s.u[old] = x[k];
        }
        let b = &x[n..n + 3 + p];
        s.beta0 = b[0];
        s.beta_z = b[1];
        s.beta_zbar = b[2];
        s.beta_c.copy_from_slice(&b[3..]);
        s.set_gamma_vector(&x[n + 3 + p..]);
    }

    /// Precision and linear term of the joint block, both in the order of
    /// [`joint_vector`](Self::joint_vector). The coefficient rows are dense
    /// and sit after the latent rows, so they only widen the envelope at the end.
    fn joint_conditional(&self, s: &McmcState) -> (SymmetricEnvelope, Vec<f64>) {
        let n = self.n();
        let jc = &self.joint;
        let kb = jc.outcome_cols.len();
        let kg = jc.gamma_cols_deg.len();
        let inv_s2 = 1.0 / s.sigma_y2;
        let b = s.beta_ubar;
        let mut first = self.latent.first.clone();
        first.extend(std::iter::repeat_n(0, kb + kg));
        let mut env =
            SymmetricEnvelope::with_first(first).expect("border rows start at column zero");
        self.latent.fill(&mut env, s.tau_u, s.phi_u, inv_s2, b);
        // outcome rows: M^T X / sigma^2 against U, X^T X / sigma^2 + prior among themselves
        for a in 0..kb {
            let (col, back) = (&jc.outcome_cols[a], &jc.outcome_back[a]);
            for k in 0..n {
                env.add(n + a, k, inv_s2 * (col[k] + b * back[k]));
            }
            for c in 0..=a {
                env.add(n + a, n + c, inv_s2 * jc.xtx[(a, c)]);
            }
            env.add(n + a, n + a, 1.0 / self.priors.sigma2_prior);
        }
        // exposure-mean rows: -Q X against U, X^T H X + prior among themselves
        let pull = s.rho * s.tau_u * s.tau_z;
        let tz2 = s.tau_z * s.tau_z;
        for a in 0..kg {
            let r = n + kb + a;
            for (k, v) in jc.gamma_cols_deg[a].iter().enumerate() {
                env.add(r, k, pull * v);
            }
            for c in 0..=a {
                env.add(
                    r,
                    n + kb + c,
                    tz2 * (jc.xg_d_xg[(a, c)] - s.phi_z * jc.xg_a_xg[(a, c)]),
                );
            }
            env.add(r, r, 1.0 / self.priors.sigma2_prior);
        }
        let mut linear: Vec<f64> = (0..n)
            .map(|k| inv_s2 * (jc.y[k] + b * jc.y_back[k]) + pull * jc.z_deg[k])
            .collect();
        linear.extend(jc.xty.iter().map(|v| v * inv_s2));
        linear.extend((0..kg).map(|a| tz2 * (jc.xg_dz[a] - s.phi_z * jc.xg_az[a])));
        (env, linear)
    }

    fn permute(&self, v: &DVector<f64>) -> Vec<f64> {
        self.latent.order.iter().map(|&old| v[old]).collect()
    }

    /// Log density of one block's full conditional at `s`, up to a constant
    /// that depends only on the other blocks.
    pub fn block_log_density(&self, block: Block, s: &McmcState) -> Result<f64> {
        self.validate_state(s)?;
        Ok(match block {
            Block::Beta => {
                let (pr, lin) = self.beta_conditional(s);
                gaussian_kernel(&pr, &lin, &DVector::from_vec(s.beta_vector()))
            }
            Block::SigmaY2 => {
                let (shape, rate) = self.sigma2_conditional(s);
                -(shape + 1.0) * s.sigma_y2.ln() - rate / s.sigma_y2
            }
            Block::Gamma => {
                let (pr, lin) = self.gamma_conditional(s);
                gaussian_kernel(&pr, &lin, &DVector::from_vec(s.gamma_vector()))
            }
            Block::Latent => {
                let (env, lin) = self.latent_conditional(s);
                -0.5 * envelope_quad(&env, &self.permute(&s.u)) + s.u.dot(&lin)
            }
            Block::Joint => {
                let (env, lin) = self.joint_conditional(s);
                let x = self.joint_vector(s);
                -0.5 * envelope_quad(&env, &x) + x.iter().zip(&lin).map(|(a, b)| a * b).sum::<f64>()
            }
            Block::Hyper => {
                let w = self.exposure_residual(s);
                self.hyper_target(s.hyper(), &self.car_stats(&s.u, &w))
            }
        })
    }

    pub(crate) fn sample_beta<R: Rng + ?Sized>(
        &self,
        s: &mut McmcState,
        rng: &mut R,
    ) -> Result<()> {
        let (pr, lin) = self.beta_conditional(s);
        let v = sample_gaussian(&pr, &lin, rng)?;
        s.set_beta_vector(v.as_slice());
        Ok(())
    }

    pub(crate) fn sample_sigma2<R: Rng + ?Sized>(
        &self,
        s: &mut McmcState,
        rng: &mut R,
    ) -> Result<()> {
        let (shape, rate) = self.sigma2_conditional(s);
        let precision: f64 = Gamma::new(shape, 1.0 / rate)
            .map_err(|e| Error::InvalidState(format!("residual variance conditional: {e}")))?
            .sample(rng);
        s.sigma_y2 = 1.0 / precision;
        Ok(())
    }

    pub(crate) fn sample_gamma<R: Rng + ?Sized>(
        &self,
        s: &mut McmcState,
        rng: &mut R,
    ) -> Result<()> {
        let (pr, lin) = self.gamma_conditional(s);
        let v = sample_gaussian(&pr, &lin, rng)?;
        s.set_gamma_vector(v.as_slice());
        Ok(())
    }

    pub(crate) fn sample_latent<R: Rng + ?Sized>(
        &self,
        s: &mut McmcState,
        rng: &mut R,
    ) -> Result<()> {
        let (env, lin) = self.latent_conditional(s);
        let chol = env.factor().map_err(|(e, _)| e)?;
        let mut x = self.permute(&lin);
        chol.solve_lower_mut(&mut x);
        for v in x.iter_mut() {
            *v += std_normal(rng);
        }
        chol.solve_upper_mut(&mut x);
        for (p, &old) in self.latent.order.iter().enumerate() {
            s.u[old] = x[p];
        }
        Ok(())
    }

    pub(crate) fn sample_joint<R: Rng + ?Sized>(
        &self,
        s: &mut McmcState,
        rng: &mut R,
    ) -> Result<()> {
        let (env, mut x) = self.joint_conditional(s);
        let chol = env.factor().map_err(|(e, _)| e)?;
        chol.solve_lower_mut(&mut x);
        for v in x.iter_mut() {
            *v += std_normal(rng);
        }
        chol.solve_upper_mut(&mut x);
        self.set_joint_vector(s, &x);
        Ok(())
    }

    /// Dense latent-block precision in original order, for tests.
    #[cfg(test)]
    fn latent_precision_dense(&self, s: &McmcState) -> DMatrix<f64> {
        let (env, _) = self.latent_conditional(s);
        let m = env.to_dense();
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for (a, &i) in self.latent.order.iter().enumerate() {
            for (b, &j) in self.latent.order.iter().enumerate() {
                out[(i, j)] = m[(a, b)];
            }
        }
        out
    }
}
