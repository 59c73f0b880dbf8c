//! Compressed sparse rows plus a thin wrapper over faer's sparse factorizations.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { n, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `xᵀ A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    /// `a·self + b·other` for matrices sharing one sparsity pattern.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!(self.indices, other.indices, "sparsity patterns differ");
        CsrMatrix {
            n: self.n,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    /// Submatrix `A[rows, cols]` with `map_*[k] = Some(new index)`.
    pub fn submatrix(&self, map_rows: &[Option<usize>], n_rows: usize, map_cols: &[Option<usize>]) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); n_rows];
        for i in 0..self.n {
            if let Some(r) = map_rows[i] {
                for (j, v) in self.row(i) {
                    if let Some(c) = map_cols[j] {
                        out[r].push((c, v));
                    }
                }
            }
        }
        out
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

pub enum Factorization {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Factorization::Cholesky(_) => "Factorization::Cholesky",
            Factorization::Lu(_) => "Factorization::Lu",
        })
    }
}

impl Factorization {
    /// Sparse Cholesky; fails when the matrix is not positive definite.
    pub fn cholesky(a: &CsrMatrix) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_cholesky(Side::Lower)
            .map(Factorization::Cholesky)
            .map_err(|e| Error::Factorization(format!("matrix is not positive definite ({e:?})")))
    }

    pub fn lu(a: &CsrMatrix) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_lu().map(Factorization::Lu).map_err(|e| Error::Factorization(format!("{e:?}")))
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, Factorization::Cholesky(_))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_block(&[b.to_vec()]).pop().unwrap()
    }

    pub fn solve_block(&self, cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if cols.is_empty() {
            return Vec::new();
        }
        let n = cols[0].len();
        let mut rhs = Mat::<f64>::from_fn(n, cols.len(), |i, j| cols[j][i]);
        match self {
            Factorization::Cholesky(f) => f.solve_in_place(rhs.as_mut()),
            Factorization::Lu(f) => f.solve_in_place(rhs.as_mut()),
        }
        (0..cols.len()).map(|j| (0..n).map(|i| rhs[(i, j)]).collect()).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 - shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0), (0, 1, -1.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn cholesky_and_lu_solve() {
        let a = laplacian_1d(50, 0.0);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x);
        for f in [Factorization::cholesky(&a).unwrap(), Factorization::lu(&a).unwrap()] {
            let y = f.solve(&b);
            let err = y.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
        // Halfway between the two lowest eigenvalues 2 − 2cos(kπ/51).
        let mu = |k: f64| 2.0 - 2.0 * (k * std::f64::consts::PI / 51.0).cos();
        let shifted = laplacian_1d(50, 0.5 * (mu(1.0) + mu(2.0)));
        assert!(Factorization::cholesky(&shifted).is_err());
        let y = Factorization::lu(&shifted).unwrap().solve(&shifted.matvec(&x));
        assert!(y.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-8));
    }
}
