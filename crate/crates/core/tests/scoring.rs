mod common;

use common::{random_matrix, rng};
use proptest::prelude::*;
use visalign::analysis::nearest_classes;
use visalign::cem::{fit, AlignMethod, AlignmentConfig, ProjectionPair};
use visalign::data::{EmbeddingTable, VisualFeatureStore};
use visalign::linalg::Matrix;
use visalign::prototypes::{episode_prototypes, PrototypeSet};
use visalign::scoring::{classify, score_s1, score_s3, score_with_text, softmax_ce};

fn setup(
    seed: u64,
    n: usize,
) -> (
    PrototypeSet<f64>,
    Matrix<f64>,
    ProjectionPair<f64>,
    Vec<f64>,
) {
    let mut r = rng(seed);
    let classes = (0..n).map(|i| format!("c{i}")).collect();
    let protos = PrototypeSet::new(classes, random_matrix(&mut r, n, 6)).unwrap();
    let names = random_matrix(&mut r, n, 9);
    let x = random_matrix(&mut r, 30, 9);
    let y = random_matrix(&mut r, 30, 6);
    let pair = fit(&x, &y, &AlignmentConfig::new(AlignMethod::CcaDewhiten, 4)).unwrap();
    let q = random_matrix(&mut r, 1, 6).row(0).to_vec();
    (protos, names, pair, q)
}

fn table_from(m: &Matrix<f64>) -> EmbeddingTable {
    EmbeddingTable::from_entries(
        m.cols(),
        "t",
        (0..m.rows()).map(|i| (format!("c{i:02}"), m.row(i).to_vec())),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s3_without_text_weight_is_s1(seed in any::<u64>(), n in 2usize..8) {
        let (protos, names, pair, q) = setup(seed, n);
        let a = score_s1(&q, &protos).unwrap();
        let b = score_s3(&q, &protos, &names, &pair, 0.0).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn s3_is_invariant_to_name_scaling(seed in any::<u64>(), n in 2usize..8, c in 0.1f64..10.0) {
        let (protos, names, pair, q) = setup(seed, n);
        let a = score_s3(&q, &protos, &names, &pair, 5.0).unwrap();
        let b = score_s3(&q, &protos, &names.scale(c), &pair, 5.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn probabilities_form_a_distribution(scores in proptest::collection::vec(-50.0f64..50.0, 1..12), pick in any::<prop::sample::Index>()) {
        let t = pick.index(scores.len());
        let (p, loss) = softmax_ce(&scores, t).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(loss >= 0.0);
        prop_assert!((loss + p[t].ln()).abs() < 1e-9 || p[t] < 1e-300);
    }

    #[test]
    fn loss_is_shift_invariant(scores in proptest::collection::vec(-20.0f64..20.0, 2..8), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let (_, a) = softmax_ce(&scores, 0).unwrap();
        let (_, b) = softmax_ce(&shifted, 0).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    /// A larger text weight never lowers the margin of a class whose cosine
    /// beats every other class's cosine.
    #[test]
    fn margin_grows_with_lambda(seed in any::<u64>(), n in 2usize..6, l1 in 0.0f64..10.0, dl in 0.0f64..10.0) {
        let mut r = rng(seed);
        let protos = PrototypeSet::new((0..n).map(|i| format!("c{i}")).collect(), random_matrix(&mut r, n, 4)).unwrap();
        let targets = random_matrix(&mut r, n, 3);
        let q = random_matrix(&mut r, 1, 4).row(0).to_vec();
        let view = targets.row(0).to_vec();
        let margin = |lambda: f64| {
            let s = score_with_text(&q, &protos, &view, &targets, lambda).unwrap();
            s[0] - s[1..].iter().copied().fold(f64::MIN, f64::max)
        };
        prop_assert!(margin(l1 + dl) >= margin(l1) - 1e-12);
        let s = score_with_text(&q, &protos, &view, &targets, 1e9).unwrap();
        prop_assert_eq!(classify(&s).unwrap(), 0);
    }

    #[test]
    fn neighbors_ignore_scale(seed in any::<u64>(), n in 3usize..15, k in 1usize..3, c in 0.1f64..10.0) {
        let m = random_matrix(&mut rng(seed), n, 5);
        let table = table_from(&m);
        let a = nearest_classes(&table, "c00", k, None).unwrap();
        let b = nearest_classes(&table.scaled(c), "c00", k, None).unwrap();
        prop_assert_eq!(a.len(), k);
        prop_assert_eq!(
            a.iter().map(|x| &x.class).collect::<Vec<_>>(),
            b.iter().map(|x| &x.class).collect::<Vec<_>>()
        );
        for w in a.windows(2) {
            prop_assert!(w[0].cosine >= w[1].cosine);
        }
        prop_assert!(a.iter().all(|x| x.class != "c00"));
    }

    #[test]
    fn prototypes_translate_with_features(seed in any::<u64>(), shots in 1usize..4, offset in proptest::collection::vec(-5.0f64..5.0, 3)) {
        let mut r = rng(seed);
        let feats = random_matrix(&mut r, 3 * shots, 3);
        let table = EmbeddingTable::from_entries(3, "f", (0..feats.rows()).map(|i| (format!("i{i}"), feats.row(i).to_vec()))).unwrap();
        let assign: Vec<(String, String)> = (0..feats.rows()).map(|i| (format!("i{i}"), format!("k{}", i % 3))).collect();
        let store = VisualFeatureStore::new(table, assign.clone()).unwrap();
        let moved = store.translated(&offset).unwrap();
        let a = episode_prototypes::<f64>(&assign, &store).unwrap();
        let b = episode_prototypes::<f64>(&assign, &moved).unwrap();
        for c in 0..3 {
            for j in 0..3 {
                prop_assert!((b.prototype(c)[j] - a.prototype(c)[j] - offset[j]).abs() < 1e-12);
            }
        }
    }
}
