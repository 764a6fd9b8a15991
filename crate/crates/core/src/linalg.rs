//! Sparse storage for graph operators and dense Cholesky-based solves.
//!
//! Graph weights and Laplacians live in a compressed-sparse-row matrix; the
//! posterior covariances are dense (`ndarray`), factorized through `faer`.

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::instrument;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Assembles from `(row, col, value)` triplets. Duplicate coordinates are
    /// summed; explicit zeros are kept.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for (i, j, v) in triplets {
            assert!(i < n_rows && j < n_cols, "triplet ({i},{j}) out of bounds");
            rows[i].push((j, v));
        }
        Self::from_rows(n_cols, rows)
    }

    pub(crate) fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.n_cols);
        Array1::from_shape_fn(self.n_rows, |i| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quadratic_form(&self, x: ArrayView1<f64>) -> f64 {
        (0..self.n_rows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_cols];
        for (i, j, v) in self.iter() {
            rows[j].push((i, v));
        }
        Self::from_rows(self.n_rows, rows)
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (i, j, v) in self.iter() {
            out[[i, j]] += v;
        }
        out
    }

    /// Dense principal submatrix on `idx` (rows and columns in the given order).
    pub fn dense_submatrix(&self, idx: &[usize]) -> Array2<f64> {
        let mut position = vec![usize::MAX; self.n_cols];
        for (p, &j) in idx.iter().enumerate() {
            position[j] = p;
        }
        let mut out = Array2::zeros((idx.len(), idx.len()));
        for (p, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                let q = position[j];
                if q != usize::MAX {
                    out[[p, q]] += v;
                }
            }
        }
        out
    }
}

/// Cholesky factorization `A = L Lᵀ` of a dense symmetric positive-definite
/// matrix.
pub struct Cholesky {
    llt: Llt<f64>,
}

impl std::fmt::Debug for Cholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cholesky").field("dim", &self.dim()).finish()
    }
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let (n, m) = a.dim();
        if n != m {
            return Err(Error::InvalidParameter(format!(
                "Cholesky needs a square matrix, got {n}x{m}"
            )));
        }
        instrument::factorization();
        let owned;
        let slice = match a.as_slice() {
            Some(s) => s,
            None => {
                owned = a.as_standard_layout().into_owned();
                owned.as_slice().unwrap()
            }
        };
        let view = MatRef::from_row_major_slice(slice, n, n);
        // Row-major storage of a symmetric matrix is its own transpose, so the
        // lower triangle read by faer is the matrix's lower triangle.
        let llt = view
            .llt(Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
        Ok(Cholesky { llt })
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn inverse(&self) -> Array2<f64> {
        let inv = self.llt.inverse();
        faer_to_ndarray(inv.as_ref())
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        Array1::from_shape_fn(n, |i| rhs[(i, 0)])
    }

    /// Solves against every column of `b`.
    pub fn solve_matrix(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let (n, k) = b.dim();
        assert_eq!(n, self.dim());
        let mut rhs = Mat::<f64>::from_fn(n, k, |i, j| b[[i, j]]);
        self.llt.solve_in_place(rhs.as_mut());
        faer_to_ndarray(rhs.as_ref())
    }

    /// log det A.
    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
    }
}

fn faer_to_ndarray(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::InvalidParameter("eigen-decomposition of a non-square matrix".into()));
    }
    let owned = a.as_standard_layout().into_owned();
    let view = MatRef::from_row_major_slice(owned.as_slice().unwrap(), n, n);
    let evd = view
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Internal(format!("eigen-decomposition failed: {e:?}")))?;
    let s = evd.S();
    let values = (0..n).map(|i| s[i]).collect();
    Ok((values, faer_to_ndarray(evd.U())))
}

/// Largest absolute entrywise difference, scaled by the largest entry of `b`.
pub fn max_relative_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn max_relative_diff_vec(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}
