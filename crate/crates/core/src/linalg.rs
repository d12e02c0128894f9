//! Sparse storage and the direct solvers used by every module.
//!
//! Assembly goes through [`CsrMatrix::from_triplets`], which sums duplicate
//! entries in insertion order so that repeated runs are bit-identical.
//! Factorizations are delegated to `faer` and run sequentially.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// in the order they were pushed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds {nrows}x{ncols}");
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Iterates the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `Aᵀ x`
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, j, v) in self.iter() {
            y[j] += v * x[i];
        }
        y
    }

    /// `xᵀ A y`
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v)).collect())
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        self.iter().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    /// Sub-matrix `A[rows, cols]`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (ri, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    t.push((ri, col_map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), t)
    }

    /// `A B` for a sparse right factor.
    pub fn matmul(&self, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, b.nrows);
        let mut t = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, v) in b.row(k) {
                    t.push((i, j, a * v));
                }
            }
        }
        CsrMatrix::from_triplets(self.nrows, b.ncols, t)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Sparse `LLᵀ` factorization of a symmetric positive definite matrix.
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::SolverFailure(format!("non-square {}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let lower: Vec<Triplet<usize, usize, f64>> =
            a.iter().filter(|&(i, j, _)| i >= j).map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &lower)
            .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
        let llt = m.sp_cholesky(Side::Lower).map_err(|e| Error::SolverFailure(format!("cholesky: {e:?}")))?;
        Ok(Self { n, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solves for every column of `rhs` in place.
    pub fn solve_columns(&self, rhs: &mut Mat<f64>) {
        self.llt.solve_in_place(rhs.as_mut());
    }
}

/// Solver for a positive semidefinite matrix whose kernel is the constants,
/// made definite by fixing one dof to zero.
///
/// For a right-hand side orthogonal to the constants, [`PinnedCholesky::solve`]
/// returns the particular solution that vanishes at the pinned dof.
pub struct PinnedCholesky {
    pin: usize,
    free: Vec<usize>,
    chol: SparseCholesky,
}

impl PinnedCholesky {
    pub fn new(a: &CsrMatrix, pin: usize) -> Result<Self> {
        let free: Vec<usize> = (0..a.nrows()).filter(|&i| i != pin).collect();
        let chol = SparseCholesky::new(&a.select(&free, &free))?;
        Ok(Self { pin, free, chol })
    }

    pub fn dim(&self) -> usize {
        self.free.len() + 1
    }

    pub fn pin(&self) -> usize {
        self.pin
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rb: Vec<f64> = self.free.iter().map(|&i| b[i]).collect();
        let x = self.chol.solve(&rb);
        let mut out = vec![0.0; self.dim()];
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }

    /// Solves for every column of a full-length dense right-hand side.
    pub fn solve_columns(&self, rhs: &Mat<f64>) -> Mat<f64> {
        let mut r = Mat::from_fn(self.free.len(), rhs.ncols(), |k, j| rhs[(self.free[k], j)]);
        self.chol.solve_columns(&mut r);
        let mut out = Mat::zeros(self.dim(), rhs.ncols());
        for (k, &i) in self.free.iter().enumerate() {
            for j in 0..rhs.ncols() {
                out[(i, j)] = r[(k, j)];
            }
        }
        out
    }
}

/// Dense LU with partial pivoting for the small reduced systems.
pub struct DenseLu {
    a: Mat<f64>,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

impl DenseLu {
    pub fn new(a: Mat<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::SolverFailure(format!("non-square {}x{}", a.nrows(), a.ncols())));
        }
        let lu = a.partial_piv_lu();
        Ok(Self { a, lu })
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.a
    }

    /// Solves `A x = b` and returns `x` with the relative residual
    /// `|Ax - b|_inf / (|A|_inf |x|_inf + |b|_inf)`.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.a.nrows();
        let mut x = Mat::from_fn(n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        let x: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularKkt("non-finite solution of the reduced system".into()));
        }
        let mut r_max = 0.0f64;
        let mut a_norm = 0.0f64;
        for i in 0..n {
            let mut r = -b[i];
            let mut row = 0.0;
            for j in 0..n {
                r += self.a[(i, j)] * x[j];
                row += self.a[(i, j)].abs();
            }
            r_max = r_max.max(r.abs());
            a_norm = a_norm.max(row);
        }
        let scale = a_norm * inf_norm(&x) + inf_norm(b);
        let rel = if scale > 0.0 { r_max / scale } else { 0.0 };
        Ok((x, rel))
    }
}

pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
