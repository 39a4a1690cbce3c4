//! Adjacency structures, neighborhood averaging and CAR-style precision
//! matrices, including the joint precision of an unmeasured confounder and
//! an exposure.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::linalg::Cholesky;

/// A symmetric, unweighted graph over `n` units with no self-loops.
///
/// Units are indexed from 0 in the API; the on-disk edge-list format is
/// 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyStructure {
    neighbors: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    median_degree: f64,
}

impl AdjacencyStructure {
    fn from_neighbors(mut neighbors: Vec<Vec<usize>>) -> Self {
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        let degrees: Vec<usize> = neighbors.iter().map(Vec::len).collect();
        let median_degree = median(&degrees);
        Self {
            neighbors,
            degrees,
            median_degree,
        }
    }

    /// `n_pairs` disjoint blocks `[[0, 1], [1, 0]]`.
    pub fn pairs(n_pairs: usize) -> Result<Self> {
        if n_pairs == 0 {
            return Err(invalid("pair adjacency needs at least one pair"));
        }
        let neighbors = (0..2 * n_pairs).map(|i| vec![i ^ 1]).collect();
        Ok(Self::from_neighbors(neighbors))
    }

    /// Path graph `1 - 2 - ... - n`.
    pub fn line(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("line adjacency needs n >= 2, got {n}")));
        }
        let neighbors = (0..n)
            .map(|i| {
                let mut v = Vec::with_capacity(2);
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        Ok(Self::from_neighbors(neighbors))
    }

    /// Symmetric closure of 0-based `edges`; duplicates are coalesced.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(invalid("adjacency needs at least one unit"));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!(
                    "edge ({}, {}) out of range for {n} units",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(invalid(format!("self-loop at unit {}", i + 1)));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Self::from_neighbors(neighbors))
    }

    /// Same as [`from_edges`](Self::from_edges) with 1-based indices.
    pub fn from_edge_list(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let zero_based = pairs
            .iter()
            .map(|&(i, j)| {
                if i == 0 || j == 0 {
                    Err(invalid(format!(
                        "edge ({i}, {j}) uses index 0; indices are 1-based"
                    )))
                } else {
                    Ok((i - 1, j - 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(n, &zero_based)
    }

    /// Fully connected graph on `n` units.
    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("adjacency needs at least one unit"));
        }
        Ok(Self::from_neighbors(
            (0..n)
                .map(|i| (0..n).filter(|&j| j != i).collect())
                .collect(),
        ))
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    /// Median of the degree sequence (mean of the middle pair when `n` is even).
    pub fn median_degree(&self) -> f64 {
        self.median_degree
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    pub fn n_edges(&self) -> usize {
        self.degrees.iter().sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Units of degree zero.
    pub fn isolated(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.degrees[i] == 0).collect()
    }

    /// Each undirected edge once, as 0-based `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for (i, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Dense 0/1 matrix `A`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// Diagonal degree matrix `D`.
    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.n(),
            self.degrees.iter().map(|&d| d as f64),
        ))
    }

    /// Units joined by an edge or by a common neighbor.
    pub fn second_degree(&self) -> Self {
        let neighbors = (0..self.n())
            .map(|i| {
                let mut v: Vec<usize> = self.neighbors[i].clone();
                for &k in &self.neighbors[i] {
                    v.extend(self.neighbors[k].iter().copied().filter(|&j| j != i));
                }
                v
            })
            .collect();
        Self::from_neighbors(neighbors)
    }

    /// Graph induced on `keep` (0-based, in the given order).
    pub fn subgraph(&self, keep: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            position[old] = new;
        }
        let neighbors = keep
            .iter()
            .map(|&old| {
                self.neighbors[old]
                    .iter()
                    .filter_map(|&j| (position[j] != usize::MAX).then_some(position[j]))
                    .collect()
            })
            .collect();
        Self::from_neighbors(neighbors)
    }

    /// Neighborhood mean of `v` for every unit.
    pub fn neighbor_average(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n() {
            return Err(invalid(format!(
                "vector has length {}, adjacency has {} units",
                v.len(),
                self.n()
            )));
        }
        if let Some(unit) = self.degrees.iter().position(|&d| d == 0) {
            return Err(Error::IsolatedUnit { unit });
        }
        Ok(self.average_unchecked(v.as_slice()))
    }

    /// Neighborhood mean without the isolated-unit check; isolated units get 0.
    pub(crate) fn average_unchecked(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.neighbors.iter().map(|nb| {
                if nb.is_empty() {
                    0.0
                } else {
                    nb.iter().map(|&j| v[j]).sum::<f64>() / nb.len() as f64
                }
            }),
        )
    }

    /// Transpose of the averaging operator applied to `r`:
    /// `out_j = sum over neighbors i of j of r_i / d_i`.
    pub(crate) fn average_transpose(&self, r: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (i, nb) in self.neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let w = r[i] / nb.len() as f64;
            for &j in nb {
                out[j] += w;
            }
        }
        out
    }

    /// `x^T A y`.
    pub(crate) fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| x[i] * nb.iter().map(|&j| y[j]).sum::<f64>())
            .sum()
    }

    /// Reads the whitespace-separated, 1-based edge-list format. Lines
    /// starting with `#` and blank lines are skipped. When `n` is `None` the
    /// number of units is the largest index seen.
    pub fn read_edge_list<R: Read>(reader: R, n: Option<usize>, origin: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(format!(
                    "expected two indices, found {} fields",
                    fields.len()
                )));
            }
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| parse_err(format!("bad index `{s}`: {e}")))
            };
            pairs.push((idx(fields[0])?, idx(fields[1])?));
        }
        let n = match n {
            Some(n) => n,
            None => pairs.iter().map(|&(i, j)| i.max(j)).max().unwrap_or(0),
        };
        Self::from_edge_list(n, &pairs)
    }

    pub fn read_edge_file(path: &Path, n: Option<usize>) -> Result<Self> {
        Self::read_edge_list(std::fs::File::open(path)?, n, path)
    }

    /// Writes the 1-based edge list, with a header comment carrying `n` so
    /// trailing isolated units survive a round trip.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "# units {}", self.n()).unwrap();
        for (i, j) in self.edges() {
            writeln!(buf, "{} {}", i + 1, j + 1).unwrap();
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Parses the optional `# units N` header written by [`AdjacencyStructure::write_edge_list`].
pub fn edge_list_unit_count(path: &Path) -> Result<Option<usize>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.lines().find_map(|l| {
        l.trim()
            .strip_prefix("# units")
            .and_then(|rest| rest.trim().parse().ok())
    }))
}

fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] + v[m]) as f64 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionKind {
    ConditionalU,
    ConditionalZ,
    JointUZ,
}

/// A symmetric positive definite precision matrix, checked by Cholesky at
/// construction.
#[derive(Debug, Clone)]
pub struct PrecisionMatrix {
    kind: PrecisionKind,
    matrix: DMatrix<f64>,
    cholesky: Cholesky,
}

impl PrecisionMatrix {
    pub fn new(kind: PrecisionKind, matrix: DMatrix<f64>) -> Result<Self> {
        let cholesky = Cholesky::new(&matrix)?;
        Ok(Self {
            kind,
            matrix,
            cholesky,
        })
    }

    pub fn kind(&self) -> PrecisionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.cholesky
    }

    pub fn log_det(&self) -> f64 {
        self.cholesky.log_det()
    }
}

/// `tau^2 (D - phi A)`.
pub fn car_precision(
    adj: &AdjacencyStructure,
    tau: f64,
    phi: f64,
    kind: PrecisionKind,
) -> Result<PrecisionMatrix> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    if !(phi.abs() < 1.0) {
        return Err(invalid(format!("phi must lie in (-1, 1), got {phi}")));
    }
    let m = (adj.degree_matrix() - adj.matrix() * phi) * (tau * tau);
    PrecisionMatrix::new(kind, m)
}

/// Joint precision `[[G, Q], [Q, H]]` with `Q` diagonal,
/// `q_i = -rho sqrt(g_ii h_ii)`.
pub fn joint_precision(
    g: &PrecisionMatrix,
    h: &PrecisionMatrix,
    rho: f64,
) -> Result<PrecisionMatrix> {
    if g.dim() != h.dim() {
        return Err(invalid(format!(
            "G is {0}x{0} but H is {1}x{1}",
            g.dim(),
            h.dim()
        )));
    }
    if !(rho.abs() < 1.0) {
        return Err(invalid(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let n = g.dim();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(g.matrix());
    m.view_mut((n, n), (n, n)).copy_from(h.matrix());
    for i in 0..n {
        let q = -rho * (g.matrix()[(i, i)] * h.matrix()[(i, i)]).sqrt();
        m[(i, n + i)] = q;
        m[(n + i, i)] = q;
    }
    PrecisionMatrix::new(PrecisionKind::JointUZ, m)
}

/// Spectrum of `D^{-1/2} A D^{-1/2}` for a graph with no isolated units.
///
/// With `G = tau_U^2 (D - phi_U A)`, `H = tau_Z^2 (D - phi_Z A)` and
/// `Q = -rho tau_U tau_Z D`, the joint precision is a 2x2 block polynomial
/// in that normalized adjacency, so
///
/// ```text
/// log det P = 2n log(tau_U tau_Z) + 2 sum_i log d_i
///           + sum_k log[(1 - phi_U l_k)(1 - phi_Z l_k) - rho^2]
/// ```
///
/// and `P` is positive definite iff every bracket is positive. This turns
/// each hyperparameter proposal into an `O(n)` evaluation.
#[derive(Debug, Clone)]
pub struct CarSpectrum {
    eigenvalues: Vec<f64>,
    sum_log_degree: f64,
}

impl CarSpectrum {
    pub fn new(adj: &AdjacencyStructure) -> Result<Self> {
        if let Some(&unit) = adj.isolated().first() {
            return Err(Error::IsolatedUnit { unit });
        }
        let n = adj.n();
        let scale: Vec<f64> = adj
            .degrees()
            .iter()
            .map(|&d| 1.0 / (d as f64).sqrt())
            .collect();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for &j in adj.neighbors(i) {
                w[(i, j)] = scale[i] * scale[j];
            }
        }
        let eig = SymmetricEigen::new(w);
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            sum_log_degree: adj.degrees().iter().map(|&d| (d as f64).ln()).sum(),
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn is_positive_definite(&self, phi_u: f64, phi_z: f64, rho: f64) -> bool {
        let r2 = rho * rho;
        self.eigenvalues
            .iter()
            .all(|&l| (1.0 - phi_u * l) * (1.0 - phi_z * l) - r2 > 0.0)
    }

    /// `log det P`, or `None` when `P` is not positive definite.
    pub fn joint_log_det(
        &self,
        tau_u: f64,
        tau_z: f64,
        phi_u: f64,
        phi_z: f64,
        rho: f64,
    ) -> Option<f64> {
        let n = self.eigenvalues.len() as f64;
        let r2 = rho * rho;
        let mut acc = 0.0;
        for &l in &self.eigenvalues {
            let b = (1.0 - phi_u * l) * (1.0 - phi_z * l) - r2;
            if !(b > 0.0) {
                return None;
            }
            acc += b.ln();
        }
        Some(2.0 * n * (tau_u * tau_z).ln() + 2.0 * self.sum_log_degree + acc)
    }
}

/// Sparse Cholesky factor of the joint `(U, Z)` precision.
///
/// Units are reordered by reverse Cuthill-McKee and the two variables of
/// each unit are interleaved, so the envelope stays narrow for spatially
/// local graphs.
#[derive(Debug, Clone)]
pub struct JointPrecisionFactor {
    order: Vec<usize>,
    cholesky: Cholesky,
}

impl JointPrecisionFactor {
    pub fn new(
        adj: &AdjacencyStructure,
        tau_u: f64,
        tau_z: f64,
        phi_u: f64,
        phi_z: f64,
        rho: f64,
    ) -> Result<Self> {
        for (name, tau) in [("tau_u", tau_u), ("tau_z", tau_z)] {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {tau}")));
            }
        }
        for (name, v) in [("phi_u", phi_u), ("phi_z", phi_z), ("rho", rho)] {
            if !(v.abs() < 1.0) {
                return Err(invalid(format!("{name} must lie in (-1, 1), got {v}")));
            }
        }
        let n = adj.n();
        let order = crate::linalg::reverse_cuthill_mckee(adj.neighbor_lists());
        let mut position = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let first: Vec<usize> = (0..2 * n)
            .map(|k| {
                let unit = order[k / 2];
                let nb_min = adj.neighbors(unit).iter().map(|&j| position[j]).min();
                let own = if k % 2 == 1 { Some(k - 1) } else { None };
                let from_nb = nb_min.map(|p| 2 * p + (k % 2)).filter(|&c| c < k);
                own.into_iter().chain(from_nb).min().unwrap_or(k)
            })
            .collect();
        let mut env = crate::linalg::SymmetricEnvelope::with_first(first)?;
        let (tu2, tz2) = (tau_u * tau_u, tau_z * tau_z);
        for (p, &unit) in order.iter().enumerate() {
            let d = adj.degree(unit) as f64;
            env.add(2 * p, 2 * p, tu2 * d);
            env.add(2 * p + 1, 2 * p + 1, tz2 * d);
            env.add(2 * p + 1, 2 * p, -rho * tau_u * tau_z * d);
            for &j in adj.neighbors(unit) {
                let q = position[j];
                if q < p {
                    env.add(2 * p, 2 * q, -tu2 * phi_u);
                    env.add(2 * p + 1, 2 * q + 1, -tz2 * phi_z);
                }
            }
        }
        let cholesky = env.factor().map_err(|(e, _)| e)?;
        Ok(Self { order, cholesky })
    }

    pub fn log_det(&self) -> f64 {
        self.cholesky.log_det()
    }

    /// One zero-mean draw `(U, Z)` with covariance equal to the inverse
    /// joint precision: solve `L^T x = w` for standard normal `w`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        use rand_distr::{Distribution, StandardNormal};
        let n = self.order.len();
        let mut x: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(rng)).collect();
        self.cholesky.solve_upper_mut(&mut x);
        let mut u = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for (p, &unit) in self.order.iter().enumerate() {
            u[unit] = x[2 * p];
            z[unit] = x[2 * p + 1];
        }
        (u, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pairs_are_block_diagonal() {
        let a = AdjacencyStructure::pairs(1).unwrap();
        assert_eq!(
            a.matrix(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
        assert_eq!(a.degrees(), &[1, 1]);
        let a = AdjacencyStructure::pairs(2).unwrap();
        assert_eq!(a.matrix()[(0, 2)], 0.0);
        assert!(a.has_edge(2, 3));
        assert_eq!(AdjacencyStructure::pairs(100).unwrap().median_degree(), 1.0);
        assert!(AdjacencyStructure::pairs(0).is_err());
    }

    #[test]
    fn line_degrees() {
        assert_eq!(AdjacencyStructure::line(3).unwrap().degrees(), &[1, 2, 1]);
        assert_eq!(AdjacencyStructure::line(100).unwrap().median_degree(), 2.0);
        assert_eq!(
            AdjacencyStructure::line(2).unwrap(),
            AdjacencyStructure::pairs(1).unwrap()
        );
        assert!(AdjacencyStructure::line(1).is_err());
    }

    #[test]
    fn edge_list_ingestion() {
        let a = AdjacencyStructure::from_edge_list(3, &[(1, 2)]).unwrap();
        assert_eq!(a.degrees(), &[1, 1, 0]);
        let a = AdjacencyStructure::from_edge_list(3, &[(1, 2), (2, 1)]).unwrap();
        assert_eq!(a.n_edges(), 1);
        assert_eq!(a.degree(1), 1);
        assert!(AdjacencyStructure::from_edge_list(2, &[(1, 1)]).is_err());
        assert!(AdjacencyStructure::from_edge_list(2, &[(1, 3)]).is_err());
    }

    #[test]
    fn edge_list_text_format() {
        let text = "# county graph\n1 2\n\n2\t3\n# trailing\n3 1\n";
        let a =
            AdjacencyStructure::read_edge_list(text.as_bytes(), None, Path::new("mem")).unwrap();
        assert_eq!(a.n(), 3);
        assert_eq!(a.n_edges(), 3);
        let bad = AdjacencyStructure::read_edge_list("1 2 3\n".as_bytes(), None, Path::new("mem"));
        assert!(matches!(bad, Err(Error::Parse { line: 1, .. })));
        let mut out = Vec::new();
        a.write_edge_list(&mut out).unwrap();
        let back =
            AdjacencyStructure::read_edge_list(out.as_slice(), Some(3), Path::new("mem")).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn second_degree_examples() {
        let line = AdjacencyStructure::line(4).unwrap();
        let two = line.second_degree();
        assert!(two.has_edge(0, 2));
        assert!(!two.has_edge(0, 3));
        let p = AdjacencyStructure::pairs(3).unwrap();
        assert_eq!(p.second_degree(), p);
        let k3 = AdjacencyStructure::complete(3).unwrap();
        assert_eq!(k3.second_degree(), k3);
    }

    #[test]
    fn neighbor_average_examples() {
        let p = AdjacencyStructure::pairs(1).unwrap();
        let v = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(
            p.neighbor_average(&v).unwrap(),
            DVector::from_vec(vec![0.0, 1.0])
        );
        let l = AdjacencyStructure::line(3).unwrap();
        let v = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        assert_eq!(
            l.neighbor_average(&v).unwrap(),
            DVector::from_vec(vec![0.0, 1.0, 0.0])
        );
        let g = AdjacencyStructure::from_edge_list(3, &[(1, 2)]).unwrap();
        assert!(matches!(
            g.neighbor_average(&DVector::zeros(3)),
            Err(Error::IsolatedUnit { unit: 2 })
        ));
    }

    #[test]
    fn car_precision_examples() {
        let l = AdjacencyStructure::line(3).unwrap();
        let g = car_precision(&l, 1.0, 0.5, PrecisionKind::ConditionalU).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 0.0, -0.5, 2.0, -0.5, 0.0, -0.5, 1.0]);
        assert_eq!(g.matrix(), &expected);
        let g0 = car_precision(&l, 1.5, 0.0, PrecisionKind::ConditionalU).unwrap();
        assert_eq!(g0.matrix(), &(l.degree_matrix() * 2.25));
        let l50 = AdjacencyStructure::line(50).unwrap();
        assert!(car_precision(&l50, 1.0, 0.99, PrecisionKind::ConditionalZ).is_ok());
        assert!(car_precision(&l, 1.0, 1.0, PrecisionKind::ConditionalU).is_err());
        assert!(car_precision(&l, 0.0, 0.5, PrecisionKind::ConditionalU).is_err());
    }

    #[test]
    fn joint_precision_examples() {
        // g_ii = 1, h_ii = 4
        let p = AdjacencyStructure::pairs(1).unwrap();
        let g = car_precision(&p, 1.0, 0.3, PrecisionKind::ConditionalU).unwrap();
        let h = car_precision(&p, 2.0, 0.2, PrecisionKind::ConditionalZ).unwrap();
        let j = joint_precision(&g, &h, 0.35).unwrap();
        assert_relative_eq!(j.matrix()[(0, 2)], -0.7, epsilon = 1e-15);
        assert_relative_eq!(j.matrix()[(3, 1)], -0.7, epsilon = 1e-15);
        assert_eq!(j.matrix()[(0, 3)], 0.0);

        let j0 = joint_precision(&g, &h, 0.0).unwrap();
        let mut direct = DMatrix::zeros(4, 4);
        direct.view_mut((0, 0), (2, 2)).copy_from(g.matrix());
        direct.view_mut((2, 2), (2, 2)).copy_from(h.matrix());
        assert_eq!(j0.matrix(), &direct);

        let l = AdjacencyStructure::line(100).unwrap();
        let g = car_precision(&l, 1.0, 0.6, PrecisionKind::ConditionalU).unwrap();
        let h = car_precision(&l, 1.0, 0.4, PrecisionKind::ConditionalZ).unwrap();
        assert!(joint_precision(&g, &h, 0.35).is_ok());

        let h3 = car_precision(
            &AdjacencyStructure::line(3).unwrap(),
            1.0,
            0.4,
            PrecisionKind::ConditionalZ,
        )
        .unwrap();
        assert!(joint_precision(&g, &h3, 0.1).is_err());
    }

    #[test]
    fn joint_precision_rejects_inadmissible_rho() {
        let l = AdjacencyStructure::line(10).unwrap();
        let g = car_precision(&l, 1.0, 0.9, PrecisionKind::ConditionalU).unwrap();
        let h = car_precision(&l, 1.0, 0.9, PrecisionKind::ConditionalZ).unwrap();
        assert!(matches!(
            joint_precision(&g, &h, 0.5),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn cross_block_is_diagonal() {
        let l = AdjacencyStructure::line(20).unwrap();
        let g = car_precision(&l, 1.3, 0.6, PrecisionKind::ConditionalU).unwrap();
        let h = car_precision(&l, 0.7, 0.4, PrecisionKind::ConditionalZ).unwrap();
        let j = joint_precision(&g, &h, -0.3).unwrap();
        let n = 20;
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    assert_eq!(j.matrix()[(i, n + k)], 0.0);
                    assert_eq!(j.matrix()[(n + k, i)], 0.0);
                }
            }
        }
    }

    #[test]
    fn spectral_log_det_matches_cholesky() {
        let graphs = [
            AdjacencyStructure::line(15).unwrap(),
            AdjacencyStructure::pairs(6).unwrap(),
            AdjacencyStructure::from_edge_list(
                6,
                &[
                    (1, 2),
                    (2, 3),
                    (3, 1),
                    (3, 4),
                    (4, 5),
                    (5, 6),
                    (6, 4),
                    (1, 6),
                ],
            )
            .unwrap(),
        ];
        for adj in &graphs {
            let spec = CarSpectrum::new(adj).unwrap();
            for &(tu, tz, pu, pz, rho) in &[
                (1.0, 1.0, 0.6, 0.4, 0.35),
                (0.7, 1.9, 0.2, 0.8, -0.3),
                (2.0, 0.5, -0.5, 0.1, 0.0),
            ] {
                let g = car_precision(adj, tu, pu, PrecisionKind::ConditionalU).unwrap();
                let h = car_precision(adj, tz, pz, PrecisionKind::ConditionalZ).unwrap();
                let j = joint_precision(&g, &h, rho).unwrap();
                let fast = spec.joint_log_det(tu, tz, pu, pz, rho).unwrap();
                assert_relative_eq!(fast, j.log_det(), epsilon = 1e-9, max_relative = 1e-11);
            }
            // PD boundary agrees with factorization
            let g = car_precision(adj, 1.0, 0.9, PrecisionKind::ConditionalU).unwrap();
            let h = car_precision(adj, 1.0, 0.9, PrecisionKind::ConditionalZ).unwrap();
            for rho in [0.05, 0.2, 0.5, 0.9] {
                assert_eq!(
                    spec.is_positive_definite(0.9, 0.9, rho),
                    joint_precision(&g, &h, rho).is_ok(),
                    "rho = {rho}"
                );
            }
        }
    }

    #[test]
    fn interleaved_factor_matches_dense() {
        let adj = AdjacencyStructure::from_edge_list(
            7,
            &[
                (1, 5),
                (5, 2),
                (2, 7),
                (7, 3),
                (3, 6),
                (6, 4),
                (1, 4),
                (2, 3),
            ],
        )
        .unwrap();
        let g = car_precision(&adj, 1.2, 0.5, PrecisionKind::ConditionalU).unwrap();
        let h = car_precision(&adj, 0.8, 0.3, PrecisionKind::ConditionalZ).unwrap();
        let j = joint_precision(&g, &h, 0.4).unwrap();
        let f = JointPrecisionFactor::new(&adj, 1.2, 0.8, 0.5, 0.3, 0.4).unwrap();
        assert_relative_eq!(f.log_det(), j.log_det(), epsilon = 1e-10);
        assert!(JointPrecisionFactor::new(&adj, 1.0, 1.0, 0.9, 0.9, 0.5).is_err());
    }

    fn random_graph() -> impl Strategy<Value = AdjacencyStructure> {
        (3usize..12).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 1..3 * n).prop_map(move |pairs| {
                let mut edges: Vec<(usize, usize)> =
                    pairs.into_iter().filter(|(i, j)| i != j).collect();
                // chain keeps every unit connected
                edges.extend((0..n - 1).map(|i| (i, i + 1)));
                AdjacencyStructure::from_edges(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn car_precision_is_pd_and_symmetric(adj in random_graph(), tau in 0.1f64..3.0, phi in -0.99f64..0.99) {
            let g = car_precision(&adj, tau, phi, PrecisionKind::ConditionalU).unwrap();
            prop_assert_eq!(g.matrix(), &g.matrix().transpose());
            let l = g.cholesky().lower();
            prop_assert!(l.diagonal().iter().all(|&d| d > 0.0));
        }

        #[test]
        fn averaging_is_linear(adj in random_graph(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let n = adj.n();
            let u = DVector::from_fn(n, |i, _| ((i as u64 * 7 + seed) as f64).sin());
            let v = DVector::from_fn(n, |i, _| ((i as u64 * 13 + seed) as f64).cos());
            let lhs = adj.neighbor_average(&(&u * a + &v * b)).unwrap();
            let rhs = adj.neighbor_average(&u).unwrap() * a + adj.neighbor_average(&v).unwrap() * b;
            for i in 0..n {
                prop_assert!((lhs[i] - rhs[i]).abs() <= 1e-12 * (1.0 + rhs[i].abs()));
            }
            let c = DVector::from_element(n, a);
            let avg = adj.neighbor_average(&c).unwrap();
            prop_assert!(avg.iter().all(|&x| (x - a).abs() < 1e-12));
        }

        #[test]
        fn second_degree_is_monotone(adj in random_graph()) {
            let two = adj.second_degree();
            for (i, j) in adj.edges() {
                prop_assert!(two.has_edge(i, j));
            }
            prop_assert!((0..two.n()).all(|i| !two.has_edge(i, i)));
        }

        #[test]
        fn average_transpose_is_adjoint(adj in random_graph(), seed in 0u64..1000) {
            let n = adj.n();
            let x: Vec<f64> = (0..n).map(|i| ((i as u64 + seed) as f64 * 0.37).sin()).collect();
            let r: Vec<f64> = (0..n).map(|i| ((i as u64 * 3 + seed) as f64 * 0.91).cos()).collect();
            let ax = adj.average_unchecked(&x);
            let atr = adj.average_transpose(&r);
            let lhs: f64 = ax.iter().zip(&r).map(|(a, b)| a * b).sum();
            let rhs: f64 = atr.iter().zip(&x).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
