use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

use super::{canonical_column_sign, orthogonal_complement, Matrix};

const MAX_SWEEPS: usize = 100;

/// Full singular value decomposition `M = U · diag(S) · Vt`.
///
/// `u` is `rows × rows`, `vt` is `cols × cols`, `singular_values` has
/// `min(rows, cols)` entries in descending order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub vt: Matrix<T>,
}

impl<T: Real> Svd<T> {
    /// `V` with singular vectors as columns.
    pub fn v(&self) -> Matrix<T> {
        self.vt.transpose()
    }

    /// Multiplies the factors back together.
    pub fn reconstruct(&self) -> Matrix<T> {
        let (r, c) = (self.u.rows(), self.vt.rows());
        let mut us = Matrix::zeros(r, c);
        for i in 0..r {
            for (j, &s) in self.singular_values.iter().enumerate() {
                us[(i, j)] = self.u[(i, j)] * s;
            }
        }
        us.matmul(&self.vt).expect("factor shapes agree")
    }
}

/// Computes the full SVD with one-sided (Hestenes) Jacobi rotations.
///
/// Sign convention: in every column of `U` the entry of largest magnitude is
/// non-negative, and the paired column of `V` is flipped alongside. Columns
/// of `V` without a partner in `U` follow the same rule on their own.
pub fn svd<T: Real>(m: &Matrix<T>) -> Result<Svd<T>> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("svd of non-finite matrix".into()));
    }
    let (u, s, v) = if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        // M^T = U' S V'^T  =>  M = V' S U'^T
        let (u_t, s, v_t) = jacobi_tall(&m.transpose());
        (v_t, s, u_t)
    };
    Ok(canonicalize(u, s, v))
}

fn canonicalize<T: Real>(mut u: Matrix<T>, s: Vec<T>, mut v: Matrix<T>) -> Svd<T> {
    let k = s.len();
    for j in 0..k {
        if canonical_column_sign(&mut u, j) {
            v.negate_column(j);
        }
    }
    for j in k..u.cols() {
        canonical_column_sign(&mut u, j);
    }
    for j in k..v.cols() {
        canonical_column_sign(&mut v, j);
    }
    Svd {
        u,
        singular_values: s,
        vt: v.transpose(),
    }
}

/// Jacobi SVD of a matrix with at least as many rows as columns. Returns
/// full `U` (rows × rows), singular values (cols), full `V` (cols × cols),
/// sorted by descending singular value.
fn jacobi_tall<T: Real>(a: &Matrix<T>) -> (Matrix<T>, Vec<T>, Matrix<T>) {
    let (r, c) = a.shape();
    debug_assert!(r >= c);
    let mut w: Vec<Vec<T>> = (0..c).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..c)
        .map(|j| {
            (0..c)
                .map(|i| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let tol = T::epsilon() * T::from_count(r.max(1));
    let two = T::one() + T::one();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero() || gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let sign = if zeta >= T::zero() {
                    T::one()
                } else {
                    -T::one()
                };
                let t = sign / (zeta.abs() + zeta.hypot(T::one()));
                let cs = T::one() / t.hypot(T::one());
                let sn = cs * t;
                rotate(&mut w, p, q, cs, sn);
                rotate(&mut v, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = w.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let s: Vec<T> = order.iter().map(|&j| norms[j]).collect();
    let s_max = s.first().copied().unwrap_or_else(T::zero);
    let keep = s
        .iter()
        .take_while(|&&x| x > s_max * T::epsilon() && x > T::min_positive_value())
        .count();

    let mut u_keep = Matrix::zeros(r, keep);
    for (new_j, &old_j) in order.iter().take(keep).enumerate() {
        let inv = T::one() / norms[old_j];
        for i in 0..r {
            u_keep[(i, new_j)] = w[old_j][i] * inv;
        }
    }
    let complement = orthogonal_complement(&u_keep);
    let u = Matrix::from_fn(r, r, |i, j| {
        if j < keep {
            u_keep[(i, j)]
        } else {
            complement[(i, j - keep)]
        }
    });
    let v_mat = Matrix::from_fn(c, c, |i, j| v[order[j]][i]);
    (u, s, v_mat)
}

#[inline]
fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, cs: T, sn: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = cs * a - sn * b;
        *y = sn * a + cs * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orth_err(m: &Matrix<f64>) -> f64 {
        m.gram().sub(&Matrix::identity(m.cols())).unwrap().max_abs()
    }

    #[test]
    fn permutation_has_unit_singular_values() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let d = svd(&m).unwrap();
        assert_eq!(d.singular_values, vec![1.0, 1.0]);
        assert!(d.reconstruct().max_abs_diff(&m).unwrap() < 1e-15);
    }

    #[test]
    fn diagonal_gives_identity_factors() {
        let m = Matrix::from_diag(&[3.0, 2.0]);
        let d = svd(&m).unwrap();
        assert_eq!(d.singular_values, vec![3.0, 2.0]);
        assert_eq!(d.u, Matrix::identity(2));
        assert_eq!(d.vt, Matrix::identity(2));
    }

    #[test]
    fn random_tall_reconstructs() {
        let m = random(5, 3, 1);
        let d = svd(&m).unwrap();
        assert_eq!(d.u.shape(), (5, 5));
        assert_eq!(d.vt.shape(), (3, 3));
        let err = d.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-10, "{err}");
        assert!(orth_err(&d.u) < 1e-10);
        assert!(orth_err(&d.v()) < 1e-10);
    }

    #[test]
    fn wide_and_rank_deficient() {
        // rank 2, 4x7
        let a = random(4, 2, 5);
        let b = random(2, 7, 6);
        let m = a.matmul(&b).unwrap();
        let d = svd(&m).unwrap();
        assert_eq!(d.u.shape(), (4, 4));
        assert_eq!(d.vt.shape(), (7, 7));
        assert!(d.singular_values[2] < 1e-12 * d.singular_values[0]);
        let err = d.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-10, "{err}");
        assert!(orth_err(&d.u) < 1e-10);
        assert!(orth_err(&d.v()) < 1e-10);
    }

    #[test]
    fn zero_matrix() {
        let d = svd(&Matrix::<f64>::zeros(3, 2)).unwrap();
        assert_eq!(d.singular_values, vec![0.0, 0.0]);
        assert!(orth_err(&d.u) < 1e-15);
    }

    #[test]
    fn sign_convention_holds() {
        let m = random(6, 4, 9);
        let d = svd(&m).unwrap();
        for j in 0..6 {
            let col = d.u.column(j);
            let peak = col
                .iter()
                .fold(0.0f64, |a, &b| if b.abs() > a.abs() { b } else { a });
            assert!(peak >= 0.0);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = Matrix::<f64>::zeros(2, 2);
        m.as_mut_slice()[1] = f64::INFINITY;
        assert!(svd(&m).is_err());
    }

    #[test]
    fn single_precision_runs() {
        let m = random(4, 3, 2).cast::<f32>();
        let d = svd(&m).unwrap();
        let err = d.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-5, "{err}");
    }
}
