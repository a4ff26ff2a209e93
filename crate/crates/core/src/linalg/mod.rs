//! Dense real-matrix kernels: row-major storage, products, singular value
//! decomposition, symmetric eigendecomposition and PSD matrix powers.

mod eig;
mod svd;

use std::fmt;
use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use eig::{inv_sqrt_psd, psd_power, sqrt_psd, sym_eig, SymEig};
pub use svd::{svd, Svd};

/// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    /// Builds a matrix from row-major values, rejecting a length mismatch
    /// or any non-finite entry.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("matrix values", rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Stacks equally long rows. An empty slice yields a 0×0 matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims("matrix row length", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        assert!(k <= self.cols, "leading_columns: {k} > {}", self.cols);
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    /// Matrix product `self · rhs`.
    ///
    /// Each output row is accumulated sequentially in a fixed order, so the
    /// result does not depend on how rows are spread across threads.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::dims("matmul inner dimension", self.cols, rhs.rows));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        if rhs.cols == 0 || self.rows == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [T])| {
            let a_row = self.row(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        };
        if self.rows * self.cols * rhs.cols >= PAR_THRESHOLD {
            out.data
                .par_chunks_mut(rhs.cols)
                .enumerate()
                .for_each(kernel);
        } else {
            out.data.chunks_mut(rhs.cols).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose of a tall matrix twice.
    pub fn t_matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::dims("t_matmul shared rows", self.rows, rhs.rows));
        }
        self.transpose().matmul(rhs)
    }

    /// Gram matrix `selfᵀ · self`, exactly symmetric.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let t = self.transpose();
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = crate::scalar::dot(t.row(i), t.row(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Row vector times matrix: `v · self`.
    pub fn vec_mul(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.rows {
            return Err(Error::dims("vector-matrix product", self.rows, v.len()));
        }
        let mut out = vec![T::zero(); self.cols];
        for (k, &a) in v.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.row(k)) {
                *o += a * b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::InvalidInput(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> T {
        crate::scalar::norm(&self.data)
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// Largest elementwise absolute difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, rhs: &Matrix<T>) -> Option<T> {
        (self.shape() == rhs.shape()).then(|| {
            self.data
                .iter()
                .zip(&rhs.data)
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn column_means(&self) -> Vec<T> {
        let mut means = vec![T::zero(); self.cols];
        for row in self.row_iter() {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = T::from_count(self.rows.max(1));
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Subtracts `offsets` from every row.
    pub fn center_rows(&self, offsets: &[T]) -> Result<Self> {
        if offsets.len() != self.cols {
            return Err(Error::dims("row offsets", self.cols, offsets.len()));
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, &o) in out.row_mut(i).iter_mut().zip(offsets) {
                *v -= o;
            }
        }
        Ok(out)
    }

    /// Elementwise conversion to another scalar type.
    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    /// Flips the sign of column `j`.
    pub(crate) fn negate_column(&mut self, j: usize) {
        for i in 0..self.rows {
            let v = self[(i, j)];
            self[(i, j)] = -v;
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols.max(1)).take(self.rows) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

/// Makes the largest-magnitude entry of column `j` non-negative. Returns
/// whether the column was flipped. Ties go to the lowest row index.
pub(crate) fn canonical_column_sign<T: Real>(m: &mut Matrix<T>, j: usize) -> bool {
    let mut best = T::zero();
    let mut best_val = T::zero();
    for i in 0..m.rows() {
        let v = m[(i, j)];
        if v.abs() > best {
            best = v.abs();
            best_val = v;
        }
    }
    if best_val < T::zero() {
        m.negate_column(j);
        true
    } else {
        false
    }
}

/// Orthonormal basis for the complement of the span of `basis` (whose
/// columns must already be orthonormal), built from Householder
/// reflectors. Returns an `n × (n - k)` matrix.
pub(crate) fn orthogonal_complement<T: Real>(basis: &Matrix<T>) -> Matrix<T> {
    let n = basis.rows();
    let k = basis.cols();
    // Householder QR of the basis; reflector vectors are kept column-wise.
    let mut work = basis.clone();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<T> = (j..n).map(|i| work[(i, j)]).collect();
        let alpha = crate::scalar::norm(&v);
        if alpha == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        let sign = if v[0] >= T::zero() {
            T::one()
        } else {
            -T::one()
        };
        v[0] += sign * alpha;
        let vnorm = crate::scalar::norm(&v);
        v.iter_mut().for_each(|x| *x /= vnorm);
        for c in j..k {
            let mut s = T::zero();
            for (t, i) in (j..n).enumerate() {
                s += v[t] * work[(i, c)];
            }
            for (t, i) in (j..n).enumerate() {
                let w = work[(i, c)];
                work[(i, c)] = w - (s + s) * v[t];
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{k-1}; its trailing columns span the complement.
    let mut q = Matrix::from_fn(
        n,
        n - k,
        |i, j| if i == j + k { T::one() } else { T::zero() },
    );
    for j in (0..k).rev() {
        let v = &reflectors[j];
        if v.is_empty() {
            continue;
        }
        for c in 0..q.cols() {
            let mut s = T::zero();
            for (t, i) in (j..n).enumerate() {
                s += v[t] * q[(i, c)];
            }
            if s == T::zero() {
                continue;
            }
            for (t, i) in (j..n).enumerate() {
                let w = q[(i, c)];
                q[(i, c)] = w - (s + s) * v[t];
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_nan() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 1.0, 4.0, 3.0]);
        assert!(a.matmul(&Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn gram_matches_transpose_product() {
        let a = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.3 - 1.0);
        let g = a.gram();
        let g2 = a.transpose().matmul(&a).unwrap();
        assert!(g.max_abs_diff(&g2).unwrap() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let s = 0.5f64.sqrt();
        let basis = Matrix::from_rows(&[[s], [s], [0.0]]).unwrap();
        let c = orthogonal_complement(&basis);
        assert_eq!(c.shape(), (3, 2));
        let full = Matrix::from_fn(
            3,
            3,
            |i, j| if j == 0 { basis[(i, 0)] } else { c[(i, j - 1)] },
        );
        let err = full.gram().sub(&Matrix::identity(3)).unwrap().max_abs();
        assert!(err < 1e-14, "{err}");
    }

    #[test]
    fn sign_convention_flips_negative_peak() {
        let mut m = Matrix::from_rows(&[[0.1], [-0.9]]).unwrap();
        assert!(canonical_column_sign(&mut m, 0));
        assert_eq!(m.as_slice(), &[-0.1, 0.9]);
    }
}
