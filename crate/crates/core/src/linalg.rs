//! Dense-storage Cholesky factorization with envelope (skyline) skipping.
//!
//! Row `i` of a symmetric matrix is stored from its first structurally
//! nonzero column `first[i]` up to the diagonal. The Cholesky factor of a
//! matrix has the same envelope, so banded and near-banded precision
//! matrices (line graphs, pairs, spatially ordered areal graphs) factor in
//! `O(n b^2)` while a fully dense matrix takes the ordinary `O(n^3)` path
//! through the same code.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot tolerance: a pivot at or below this fraction of the
/// largest diagonal entry fails the factorization.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower triangle of a symmetric matrix in envelope storage.
#[derive(Debug, Clone)]
pub struct SymmetricEnvelope {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SymmetricEnvelope {
    /// Empty (all-zero) matrix with the given row envelope.
    pub fn with_first(first: Vec<usize>) -> Result<Self> {
        let n = first.len();
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            if f > i {
                return Err(Error::InvalidArgument(format!(
                    "envelope start {f} lies right of the diagonal in row {i}"
                )));
            }
            offset.push(total);
            total += i - f + 1;
        }
        offset.push(total);
        Ok(Self {
            n,
            first,
            offset,
            data: vec![0.0; total],
        })
    }

    pub fn dense(n: usize) -> Self {
        Self::with_first(vec![0; n]).expect("zero envelope start is always valid")
    }

    /// Copies the lower triangle of `m`, trimming leading zeros of each row.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let first = (0..n)
            .map(|i| (0..i).find(|&j| m[(i, j)] != 0.0).unwrap_or(i))
            .collect();
        let mut env = Self::with_first(first)?;
        for i in 0..n {
            for j in env.first[i]..=i {
                env.data[env.offset[i] + j - env.first[i]] = m[(i, j)];
            }
        }
        Ok(env)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn first(&self) -> &[usize] {
        &self.first
    }

    /// Number of stored entries.
    pub fn stored(&self) -> usize {
        self.data.len()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        (j >= self.first[i]).then(|| self.offset[i] + j - self.first[i])
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    ///
    /// Panics when the entry lies outside the envelope.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is outside the envelope"));
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.first[i]..=i {
                let v = self.data[self.offset[i] + j - self.first[i]];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.offset[i]..self.offset[i + 1]]
    }

    /// Factors in place. On failure the storage is returned untouched in
    /// spirit only: its contents are partially overwritten and must be
    /// cleared before reuse.
    pub fn factor(mut self) -> std::result::Result<Cholesky, (Error, SymmetricEnvelope)> {
        let max_diag = (0..self.n)
            .map(|i| self.data[self.offset[i + 1] - 1])
            .fold(0.0_f64, f64::max);
        let tol = PIVOT_TOLERANCE * max_diag;
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let oj = self.offset[j];
                let mut s = self.data[oi + j - fi];
                let ri = &self.data[oi + k0 - fi..oi + j - fi];
                let rj = &self.data[oj + k0 - fj..oj + j - fj];
                s -= dot(ri, rj);
                let ljj = self.data[self.offset[j + 1] - 1];
                self.data[oi + j - fi] = s / ljj;
            }
            let row = &self.data[oi..oi + i - fi];
            let pivot = self.data[oi + i - fi] - dot(row, row);
            if !(pivot > tol) {
                return Err((Error::NotPositiveDefinite { row: i, pivot }, self));
            }
            self.data[oi + i - fi] = pivot.sqrt();
        }
        Ok(Cholesky { env: self })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    env: SymmetricEnvelope,
}

impl Cholesky {
    /// Factors a dense symmetric matrix (only the lower triangle is read).
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        SymmetricEnvelope::from_dense(m)?
            .factor()
            .map_err(|(e, _)| e)
    }

    pub fn dim(&self) -> usize {
        self.env.n
    }

    #[inline]
    fn diag(&self, i: usize) -> f64 {
        self.env.data[self.env.offset[i + 1] - 1]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.env.n).map(|i| self.diag(i).ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_mut(&self, b: &mut [f64]) {
        for i in 0..self.env.n {
            let fi = self.env.first[i];
            let row = self.env.row(i);
            let s = dot(&row[..i - fi], &b[fi..i]);
            b[i] = (b[i] - s) / row[i - fi];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn solve_upper_mut(&self, y: &mut [f64]) {
        for i in (0..self.env.n).rev() {
            let fi = self.env.first[i];
            let row = self.env.row(i);
            y[i] /= row[i - fi];
            let xi = y[i];
            for (k, l) in (fi..i).zip(row) {
                y[k] -= l * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_mut(x.as_mut_slice());
        self.solve_upper_mut(x.as_mut_slice());
        x
    }

    /// `L^T v`.
    pub fn mul_upper(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.env.n];
        for i in 0..self.env.n {
            let fi = self.env.first[i];
            for (k, l) in (fi..=i).zip(self.env.row(i)) {
                out[k] += l * v[i];
            }
        }
        out
    }

    /// `x^T A x` computed as `|L^T x|^2`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let w = self.mul_upper(x);
        dot(&w, &w)
    }

    pub fn lower(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.env.n, self.env.n);
        for i in 0..self.env.n {
            let fi = self.env.first[i];
            for (j, l) in (fi..=i).zip(self.env.row(i)) {
                m[(i, j)] = *l;
            }
        }
        m
    }

    /// Dense inverse; intended for small matrices and test oracles.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.env.n;
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        inv
    }

    /// Releases the storage for reuse.
    pub fn into_storage(self) -> SymmetricEnvelope {
        self.env
    }
}

/// Reverse Cuthill-McKee ordering of an undirected graph given as
/// neighbor lists. Returns `order` with `order[new] = old`.
pub fn reverse_cuthill_mckee(neighbors: &[Vec<usize>]) -> Vec<usize> {
    let n = neighbors.len();
    let degree = |v: usize| neighbors[v].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree(v), v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = neighbors[v]
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            next.sort_by_key(|&w| (degree(w), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope starts of a symmetric sparsity pattern after permuting
/// `order[new] = old`.
pub fn envelope_for(neighbors: &[Vec<usize>], order: &[usize]) -> Vec<usize> {
    let mut position = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    order
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            neighbors[old]
                .iter()
                .map(|&w| position[w])
                .filter(|&p| p < new)
                .min()
                .unwrap_or(new)
        })
        .collect()
}
