//! Dense row-major data matrices and a small Cholesky factorisation used in
//! the samplers' inner loops.

use crate::error::{Error, Result};

/// Dense row-major `n x p` matrix of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        Ok(Matrix { nrows, ncols, data })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.ncols + j] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.ncols.max(1)).take(self.nrows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            nrows: idx.len(),
            ncols: self.ncols,
            data,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.ncols];
        for row in self.rows() {
            for (m, &x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = self.nrows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Maximum-likelihood (divide by `n`) covariance, row-major `p x p`.
    pub fn ml_covariance(&self) -> Vec<f64> {
        let p = self.ncols;
        let means = self.column_means();
        let mut cov = vec![0.0; p * p];
        let mut centred = vec![0.0; p];
        for row in self.rows() {
            for j in 0..p {
                centred[j] = row[j] - means[j];
            }
            add_outer_lower(&mut cov, &centred, 1.0);
        }
        let n = self.nrows as f64;
        cov.iter_mut().for_each(|c| *c /= n);
        mirror_lower(&mut cov, p);
        cov
    }
}

/// `acc += w * x x^T`, lower triangle only.
#[inline]
pub(crate) fn add_outer_lower(acc: &mut [f64], x: &[f64], w: f64) {
    let p = x.len();
    for a in 0..p {
        let wa = w * x[a];
        let row = &mut acc[a * p..a * p + a + 1];
        for (b, r) in row.iter_mut().enumerate() {
            *r += wa * x[b];
        }
    }
}

/// Copy the lower triangle of a row-major square matrix onto its upper triangle.
pub(crate) fn mirror_lower(a: &mut [f64], p: usize) {
    for i in 0..p {
        for j in 0..i {
            a[j * p + i] = a[i * p + j];
        }
    }
}

pub(crate) fn trace(a: &[f64], p: usize) -> f64 {
    (0..p).map(|i| a[i * p + i]).sum()
}

/// Lower-triangular Cholesky factor `A = L L^T` of a symmetric positive
/// definite matrix, stored row-major.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor a row-major symmetric matrix (only the lower triangle is read).
    /// Returns `None` unless every pivot is strictly positive and finite.
    pub fn new(a: &[f64], n: usize) -> Option<Self> {
        Self::with_tolerance(a, n, 0.0)
    }

    /// As [`Cholesky::new`], but also rejects pivots `d` with
    /// `d <= rel_tol * max_diag(A)`, which flags numerically rank-deficient input.
    pub fn with_tolerance(a: &[f64], n: usize, rel_tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
        let floor = rel_tol * max_diag;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > floor) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solve `L y = b` in place.
    #[inline]
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = b[i];
            for (k, &lik) in row.iter().enumerate() {
                s -= lik * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solve `L^T x = y` in place.
    #[inline]
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    /// Squared Mahalanobis norm `b^T A^{-1} b`, using `scratch` as workspace.
    #[inline]
    pub fn mahalanobis_sq(&self, b: &[f64], scratch: &mut [f64]) -> f64 {
        scratch[..self.n].copy_from_slice(b);
        self.solve_lower_in_place(&mut scratch[..self.n]);
        scratch[..self.n].iter().map(|y| y * y).sum()
    }

    /// `out = L z`.
    #[inline]
    pub fn mul_lower(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i + 1];
            out[i] = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// Row-major inverse of the factored matrix.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}
