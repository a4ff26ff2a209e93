mod common;

use common::{random_matrix, rng, to_na};
use proptest::prelude::*;
use visalign::linalg::{inv_sqrt_psd, svd, sym_eig, Matrix};

fn orthonormality_error(m: &Matrix<f64>) -> f64 {
    m.gram().max_abs_diff(&Matrix::identity(m.cols())).unwrap()
}

fn reconstruction_error(m: &Matrix<f64>) -> f64 {
    let dec = svd(m).unwrap();
    let rebuilt = dec.reconstruct();
    rebuilt.sub(m).unwrap().frobenius_norm() / m.frobenius_norm().max(f64::MIN_POSITIVE)
}

#[test]
fn large_square_svd() {
    let m = random_matrix(&mut rng(200), 200, 200);
    let dec = svd(&m).unwrap();
    assert!(reconstruction_error(&m) < 1e-10);
    assert!(orthonormality_error(&dec.u) < 1e-10);
    assert!(orthonormality_error(&dec.v()) < 1e-10);
}

#[test]
fn singular_values_match_nalgebra() {
    let m = random_matrix(&mut rng(31), 17, 9);
    let ours = svd(&m).unwrap().singular_values;
    let mut theirs: Vec<f64> = to_na(&m).singular_values().iter().copied().collect();
    theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (a, b) in ours.iter().zip(&theirs) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn eigenvalues_match_nalgebra() {
    let a = random_matrix(&mut rng(32), 12, 12);
    let sym = a.gram();
    let ours = sym_eig(&sym).unwrap().values;
    let mut theirs: Vec<f64> = nalgebra::SymmetricEigen::new(to_na(&sym))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (a, b) in ours.iter().zip(&theirs) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn results_independent_of_thread_count() {
    let a = random_matrix(&mut rng(9), 150, 120);
    let b = random_matrix(&mut rng(10), 120, 140);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let prod = a.matmul(&b).unwrap();
            let dec = svd(&a).unwrap();
            let root = inv_sqrt_psd(&a.gram(), 1e-10).unwrap();
            (prod, dec.u, dec.singular_values, dec.vt, root)
        })
    };
    let one = run(1);
    let many = run(8);
    assert!(one
        .0
        .as_slice()
        .iter()
        .zip(many.0.as_slice())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(one.1, many.1);
    assert_eq!(one.2, many.2);
    assert_eq!(one.3, many.3);
    assert_eq!(one.4, many.4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(seed in any::<u64>(), rows in 1usize..40, cols in 1usize..40) {
        let m = random_matrix(&mut rng(seed), rows, cols);
        let dec = svd(&m).unwrap();
        prop_assert_eq!(dec.u.shape(), (rows, rows));
        prop_assert_eq!(dec.vt.shape(), (cols, cols));
        prop_assert!(reconstruction_error(&m) < 1e-10);
        prop_assert!(orthonormality_error(&dec.u) < 1e-10);
        prop_assert!(orthonormality_error(&dec.v()) < 1e-10);
        for w in dec.singular_values.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(dec.singular_values.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn svd_sign_convention(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..12) {
        let m = random_matrix(&mut rng(seed), rows, cols);
        let dec = svd(&m).unwrap();
        for j in 0..rows {
            let col = dec.u.column(j);
            let peak = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            prop_assert!(peak >= 0.0);
        }
    }

    #[test]
    fn eigenpairs_have_small_residuals(seed in any::<u64>(), n in 1usize..20) {
        let a = random_matrix(&mut rng(seed), n, n);
        let sym = Matrix::from_fn(n, n, |i, j| a[(i, j)] + a[(j, i)]);
        let eig = sym_eig(&sym).unwrap();
        prop_assert!(orthonormality_error(&eig.vectors) < 1e-10);
        for k in 0..n {
            let v = eig.vectors.column(k);
            let mv = sym.vec_mul(&v).unwrap();
            let res: f64 = mv.iter().zip(&v).map(|(x, y)| (x - eig.values[k] * y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res < 1e-9, "residual {}", res);
        }
    }

    #[test]
    fn inverse_root_whitens_full_rank(seed in any::<u64>(), n in 1usize..15) {
        let a = random_matrix(&mut rng(seed), n + 5, n);
        let gram = a.gram();
        let r = inv_sqrt_psd(&gram, 1e-10).unwrap();
        let rmr = r.matmul(&gram).unwrap().matmul(&r).unwrap();
        prop_assert!(rmr.max_abs_diff(&Matrix::identity(n)).unwrap() < 1e-8);
    }
}
