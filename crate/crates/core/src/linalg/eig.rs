use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{canonical_column_sign, Matrix};

/// Relative asymmetry tolerated by [`sym_eig`].
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigendecomposition of a symmetric matrix: `M = V · diag(values) · Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEig<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Orthonormal eigenvectors as columns, paired with `values`.
    pub vectors: Matrix<T>,
}

/// Symmetric eigendecomposition via Householder tridiagonalization followed
/// by implicit QL iterations.
///
/// The input is symmetrized before decomposition. Eigenvector signs follow
/// the same rule as [`svd`](super::svd): largest-magnitude entry non-negative.
pub fn sym_eig<T: Real>(m: &Matrix<T>) -> Result<SymEig<T>> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "sym_eig needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("sym_eig of non-finite matrix".into()));
    }
    let n = m.rows();
    let scale = m.max_abs();
    let half = T::of(0.5);
    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (m[(i, j)], m[(j, i)]);
            if (x - y).abs() > T::of(SYMMETRY_TOL) * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j}): {x} vs {y}"
                )));
            }
            let s = (x + y) * half;
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    if n == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }

    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut a, &mut d, &mut e);
    // QL rotations act on pairs of eigenvector columns; work on the
    // transpose so those become contiguous rows.
    let mut vt = a.transpose();
    ql_implicit(&mut vt, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::from_fn(n, n, |i, j| vt[(order[j], i)]);
    for j in 0..n {
        canonical_column_sign(&mut vectors, j);
    }
    Ok(SymEig { values, vectors })
}

/// Householder reduction to tridiagonal form. On exit `v` holds the
/// accumulated orthogonal transform, `d` the diagonal and `e` the
/// sub-diagonal (in `e[1..]`).
fn tridiagonalize<T: Real>(v: &mut Matrix<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
                v[(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    let t = v[(k, j)];
                    v[(k, j)] = t - (f * e[k] + g * d[k]);
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let t = v[(k, j)];
                    v[(k, j)] = t - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = T::zero();
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Implicit QL on the tridiagonal `(d, e)`; rotations are applied to the
/// rows of `vt` (eigenvectors stored as rows).
fn ql_implicit<T: Real>(vt: &mut Matrix<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let eps = T::epsilon();
    let two = T::one() + T::one();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let max_iter = 50 * n.max(1);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::Degenerate(
                        "symmetric eigensolver failed to converge".into(),
                    ));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(vt, i, s, c);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

#[inline]
fn rotate_rows<T: Real>(vt: &mut Matrix<T>, i: usize, s: T, c: T) {
    let cols = vt.cols();
    let data = vt.as_mut_slice();
    let (lo, hi) = data.split_at_mut((i + 1) * cols);
    let row_i = &mut lo[i * cols..];
    let row_next = &mut hi[..cols];
    for (a, b) in row_i.iter_mut().zip(row_next.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// `M^power` for symmetric positive semi-definite `M`, treating eigenvalues
/// at or below `eps_rel · λ_max` as zero (mapped to 0 for any power).
///
/// Fails with [`Error::NotPsd`] when an eigenvalue lies below
/// `-eps_rel · λ_max`.
pub fn psd_power<T: Real>(m: &Matrix<T>, power: T, eps_rel: T) -> Result<Matrix<T>> {
    if eps_rel.is_nan() || eps_rel < T::zero() {
        return Err(Error::InvalidInput(format!(
            "eps_rel must be >= 0, got {eps_rel}"
        )));
    }
    let eig = sym_eig(m)?;
    let n = eig.values.len();
    let lambda_max = eig
        .values
        .first()
        .copied()
        .unwrap_or_else(T::zero)
        .max(T::zero());
    let floor = eps_rel * lambda_max;
    if let Some(&lowest) = eig.values.last() {
        if lowest < -floor {
            return Err(Error::NotPsd {
                eigenvalue: lowest.to_f64_lossy(),
                tolerance: -floor.to_f64_lossy(),
            });
        }
    }
    let kept: Vec<(usize, T)> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > floor && l > T::zero())
        .map(|(i, &l)| (i, l.powf(power)))
        .collect();
    // V_k · diag(f) · V_kᵀ using only retained eigenpairs.
    let scaled = Matrix::from_fn(n, kept.len(), |i, j| {
        eig.vectors[(i, kept[j].0)] * kept[j].1
    });
    let basis_t = Matrix::from_fn(kept.len(), n, |j, i| eig.vectors[(i, kept[j].0)]);
    let mut out = scaled.matmul(&basis_t)?;
    let half = T::of(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (out[(i, j)] + out[(j, i)]) * half;
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

/// Pseudo-inverse square root `M^(-1/2)` of a PSD matrix.
pub fn inv_sqrt_psd<T: Real>(m: &Matrix<T>, eps_rel: T) -> Result<Matrix<T>> {
    psd_power(m, T::of(-0.5), eps_rel)
}

/// Square root `M^(1/2)` of a PSD matrix with the same eigenvalue floor as
/// [`inv_sqrt_psd`], so the two are Moore–Penrose inverses of each other.
pub fn sqrt_psd<T: Real>(m: &Matrix<T>, eps_rel: T) -> Result<Matrix<T>> {
    psd_power(m, T::of(0.5), eps_rel)
}
