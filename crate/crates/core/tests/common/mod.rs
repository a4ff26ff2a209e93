//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visalign::linalg::Matrix;
use visalign::mapnet::MapNet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in [-1, 1).
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let mean = m.column(j).mean();
        out.column_mut(j).add_scalar_mut(-mean);
    }
    out
}

/// Canonical correlations from the generalized eigenproblem
/// `Σxy Σyy⁻¹ Σyx a = ρ² Σxx a`, reduced to a symmetric problem with the
/// Cholesky factor of `Σxx`. Descending.
pub fn cca_oracle(x: &Matrix<f64>, y: &Matrix<f64>, center: bool) -> Vec<f64> {
    let (mut x, mut y) = (to_na(x), to_na(y));
    if center {
        x = centered(&x);
        y = centered(&y);
    }
    let sxx = x.transpose() * &x;
    let syy = y.transpose() * &y;
    let sxy = x.transpose() * &y;
    let l = sxx.cholesky().expect("Σxx positive definite").l();
    let l_inv = l.clone().try_inverse().expect("invertible factor");
    let syy_inv = syy.try_inverse().expect("Σyy invertible");
    let m = &l_inv * &sxy * syy_inv * sxy.transpose() * l_inv.transpose();
    let sym = (&m + m.transpose()) * 0.5;
    let mut rho2: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    rho2.sort_by(|a, b| b.partial_cmp(a).unwrap());
    rho2.into_iter().map(|r| r.max(0.0).sqrt()).collect()
}

/// A small random episode for the mapping network: `names` (N×m_t),
/// `prototypes` (N×m_v) and two labeled queries per class.
pub struct ToyEpisode {
    pub names: Matrix<f64>,
    pub prototypes: Matrix<f64>,
    pub queries: Vec<(Vec<f64>, usize)>,
}

pub fn toy_episode(rng: &mut ChaCha8Rng, n: usize, m_t: usize, m_v: usize) -> ToyEpisode {
    let names = random_matrix(rng, n, m_t);
    let prototypes = random_matrix(rng, n, m_v);
    let mut queries = Vec::new();
    for c in 0..n {
        for _ in 0..2 {
            let q = prototypes
                .row(c)
                .iter()
                .map(|v| v + 0.5 * rng.random_range(-1.0..1.0))
                .collect();
            queries.push((q, c));
        }
    }
    ToyEpisode {
        names,
        prototypes,
        queries,
    }
}

pub const TENSOR_NAMES: [&str; 6] = ["w1", "b1", "gamma", "beta", "w2", "b2"];

/// Per-tensor `max|analytic − numeric| / max(max|analytic|, max|numeric|)`
/// with central differences of step `h`.
pub fn gradient_errors(
    net: &MapNet<f64>,
    ep: &ToyEpisode,
    lambda: f64,
    h: f64,
) -> Vec<(&'static str, f64)> {
    let (_, grads, _) = net
        .episode_loss_and_grads(&ep.names, &ep.prototypes, &ep.queries, lambda)
        .unwrap();
    let analytic = grads.tensors();
    let loss = |n: &MapNet<f64>| {
        n.episode_loss_and_grads(&ep.names, &ep.prototypes, &ep.queries, lambda)
            .unwrap()
            .0
    };
    let mut out = Vec::new();
    for (slot, name) in TENSOR_NAMES.iter().enumerate() {
        let len = analytic[slot].1.len();
        let mut numeric = vec![0.0; len];
        for (k, slot_value) in numeric.iter_mut().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[slot][k] += h;
            let mut minus = net.clone();
            minus.params_mut()[slot][k] -= h;
            *slot_value = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        let a = analytic[slot].1;
        let diff = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let scale = a
            .iter()
            .chain(&numeric)
            .map(|v| v.abs())
            .fold(1e-12, f64::max);
        out.push((*name, diff / scale));
    }
    out
}

/// Straight-line evaluation of linear → ReLU → batch norm (batch
/// statistics) → linear, one scalar at a time.
pub fn reference_forward_train(net: &MapNet<f64>, x: &Matrix<f64>) -> Matrix<f64> {
    let n = x.rows();
    let h = net.hidden_dim();
    let mut act = vec![vec![0.0; h]; n];
    for i in 0..n {
        for j in 0..h {
            let mut s = net.b1[j];
            for k in 0..x.cols() {
                s += x[(i, k)] * net.w1[(k, j)];
            }
            act[i][j] = if s > 0.0 { s } else { 0.0 };
        }
    }
    for j in 0..h {
        let mean = act.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = act.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        for row in act.iter_mut() {
            row[j] = net.gamma[j] * (row[j] - mean) / (var + net.bn_eps).sqrt() + net.beta[j];
        }
    }
    Matrix::from_fn(n, net.output_dim(), |i, o| {
        let mut s = net.b2[o];
        for j in 0..h {
            s += act[i][j] * net.w2[(j, o)];
        }
        s
    })
}
