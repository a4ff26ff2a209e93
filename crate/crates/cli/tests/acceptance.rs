#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{cca_oracle, gradient_errors, random_matrix, rng, toy_episode};
use rand::Rng;
use visalign::cem::{fit, fit_classes, fit_with_steps, AlignMethod, AlignmentConfig};
use visalign::data::{DataBundle, Section};
use visalign::episodes::{
    confidence_interval, episode_rng, evaluate, generate, sample_episode, EvalConfig, EvalReport,
    GeneratorConfig, TextAssets, DEFAULT_QUERY,
};
use visalign::linalg::Matrix;
use visalign::mapnet::MapNet;
use visalign::prototypes::episode_prototypes;
use visalign::scoring::{classify, score_s3, Variant};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn identity_error(m: &Matrix<f64>) -> f64 {
    m.max_abs_diff(&Matrix::identity(m.rows())).unwrap()
}

fn cca_matches_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(40);
    let x = random_matrix(&mut r, 40, 12);
    let y = Matrix::from_fn(40, 8, |i, j| {
        x[(i, j)] - 0.6 * x[(i, j + 3)] + 0.8 * r.random_range(-1.0..1.0)
    });
    let pair = fit(
        &x,
        &y,
        &AlignmentConfig::new(AlignMethod::Cca, 4).centered(true),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let oracle = cca_oracle(&x, &y, true);
    let err = pair
        .correlations()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        err < 1e-8 && elapsed < Duration::from_secs(1),
        format!("max |ρ − ρ_oracle| = {err:.2e}, fit in {elapsed:.2?}"),
    )
}

fn dewhiten_reduces_to_rotation() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut r = rng(500 + seed);
        let x = random_matrix(&mut r, 10, 10);
        let y = random_matrix(&mut r, 10, 10);
        let (pair, steps) =
            fit_with_steps(&x, &y, &AlignmentConfig::new(AlignMethod::CcaDewhiten, 6))
                .map_err(|e| e.to_string())?;
        worst = worst
            .max(
                pair.a()
                    .max_abs_diff(&steps.rotate_text.leading_columns(6))
                    .unwrap(),
            )
            .max(
                pair.b()
                    .max_abs_diff(&steps.rotate_visual.leading_columns(6))
                    .unwrap(),
            );
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-8 && elapsed < Duration::from_secs(1),
        format!("max |A1A2A3A4 − A2A4| = {worst:.2e} over 5 instances in {elapsed:.2?}"),
    )
}

fn whitening_orthonormality() -> Outcome {
    let (mut white, mut rot) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut r = rng(2000 + seed);
        let x = random_matrix(&mut r, 40, 12);
        let y = random_matrix(&mut r, 40, 8);
        let (_, steps) = fit_with_steps(&x, &y, &AlignmentConfig::new(AlignMethod::CcaDewhiten, 6))
            .map_err(|e| e.to_string())?;
        let x1 = x.matmul(&steps.whiten_text).unwrap();
        white = white.max(identity_error(&x1.gram()));
        rot = rot.max(identity_error(&steps.rotate_text.gram()));
    }
    check(
        white < 1e-8 && rot < 1e-10,
        format!(
            "max ‖(X0A1)ᵀX0A1 − I‖ = {white:.2e}, max ‖A2ᵀA2 − I‖ = {rot:.2e} over 20 instances"
        ),
    )
}

fn correlated(signal: f64) -> DataBundle {
    generate(&GeneratorConfig {
        classes: 200,
        images_per_class: 30,
        dim_text: 24,
        dim_vis: 16,
        rank: Some(8),
        signal,
        noise: 1.5,
        seed: 11,
        ..Default::default()
    })
    .unwrap()
}

fn same_bits(a: &EvalReport, b: &EvalReport) -> bool {
    a.per_episode.len() == b.per_episode.len()
        && a.per_episode
            .iter()
            .zip(&b.per_episode)
            .all(|(x, y)| x.to_bits() == y.to_bits())
        && a.mean_accuracy.to_bits() == b.mean_accuracy.to_bits()
        && a.ci95_half_width.to_bits() == b.ci95_half_width.to_bits()
}

fn zero_lambda_matches_s1(data: &DataBundle) -> Outcome {
    let pair = fit_classes(
        &data.text,
        &data.store,
        &data.split.base,
        &AlignmentConfig::new(AlignMethod::CcaDewhiten, 8),
    )
    .map_err(|e| e.to_string())?;
    let net = MapNet::<f64>::new(24, 32, 16, &mut rng(1));
    let base = EvalConfig {
        n_way: 5,
        k_shot: 1,
        episodes: 100,
        seed: 21,
        ..Default::default()
    };
    let assets = TextAssets {
        pair: Some(&pair),
        net: Some(&net),
    };
    let run = |variant| {
        evaluate(
            &EvalConfig {
                variant,
                lambda: 0.0,
                ..base
            },
            data,
            assets,
            0,
        )
        .map_err(|e| e.to_string())
    };
    let (s1, s2, s3) = (run(Variant::S1)?, run(Variant::S2)?, run(Variant::S3)?);
    check(
        same_bits(&s1, &s2) && same_bits(&s1, &s3),
        format!(
            "100 episodes, s1 accuracy {:.4}, s2/s3 identical bits",
            s1.mean_accuracy
        ),
    )
}

fn gradients_match_differences() -> Outcome {
    let mut worst = ("", 0.0f64);
    for seed in 0..10 {
        let mut r = rng(seed);
        let net = MapNet::<f64>::new(7, 5, 6, &mut r);
        let ep = toy_episode(&mut r, 5, 7, 6);
        for (name, err) in gradient_errors(&net, &ep, 5.0, 1e-5) {
            if err > worst.1 {
                worst = (name, err);
            }
        }
    }
    check(
        worst.1 < 1e-4,
        format!(
            "max relative error {:.2e} ({}) over 10 seeds",
            worst.1, worst.0
        ),
    )
}

fn name_scaling_keeps_predictions(data: &DataBundle) -> Outcome {
    let pair = fit_classes(
        &data.text,
        &data.store,
        &data.split.base,
        &AlignmentConfig::new(AlignMethod::CcaDewhiten, 8),
    )
    .map_err(|e| e.to_string())?;
    let scaled = data.text.scaled(3.0);
    let mut changed = 0usize;
    let mut queries = 0usize;
    for index in 0..600 {
        let ep = sample_episode(
            &data.split,
            Section::Novel,
            &data.store,
            5,
            1,
            DEFAULT_QUERY,
            &mut episode_rng(17, index),
        )
        .map_err(|e| e.to_string())?;
        let protos =
            episode_prototypes::<f64>(&ep.support, &data.store).map_err(|e| e.to_string())?;
        let names = data
            .text
            .to_matrix(protos.classes())
            .map_err(|e| e.to_string())?;
        let names3 = scaled
            .to_matrix(protos.classes())
            .map_err(|e| e.to_string())?;
        for (image, _) in &ep.query {
            let q = data
                .store
                .require_feature(image)
                .map_err(|e| e.to_string())?;
            let a = classify(&score_s3(q, &protos, &names, &pair, 5.0).map_err(|e| e.to_string())?)
                .unwrap();
            let b =
                classify(&score_s3(q, &protos, &names3, &pair, 5.0).map_err(|e| e.to_string())?)
                    .unwrap();
            changed += usize::from(a != b);
            queries += 1;
        }
    }
    check(
        changed == 0,
        format!("{changed} of {queries} argmax changed over 600 episodes"),
    )
}

fn text_uplift(data: &DataBundle) -> Outcome {
    let start = Instant::now();
    let pair = fit_classes(
        &data.text,
        &data.store,
        &data.split.base,
        &AlignmentConfig::new(AlignMethod::CcaDewhiten, 8),
    )
    .map_err(|e| e.to_string())?;
    let base = EvalConfig {
        variant: Variant::S3,
        n_way: 5,
        k_shot: 1,
        episodes: 600,
        seed: 0,
        section: Section::Novel,
        ..Default::default()
    };
    let assets = TextAssets {
        pair: Some(&pair),
        net: None,
    };
    let mut accuracy = Vec::new();
    for lambda in 0..=10 {
        let report = evaluate(
            &EvalConfig {
                lambda: f64::from(lambda),
                ..base
            },
            data,
            assets,
            0,
        )
        .map_err(|e| e.to_string())?;
        accuracy.push(report.mean_accuracy);
    }
    let s1 = evaluate(
        &EvalConfig {
            variant: Variant::S1,
            ..base
        },
        data,
        TextAssets::default(),
        0,
    )
    .map_err(|e| e.to_string())?
    .mean_accuracy;
    let elapsed = start.elapsed();
    let uplift = 100.0 * (accuracy[5] - s1);
    let zero_worst = accuracy[1..].iter().all(|&a| a > accuracy[0]);
    check(
        uplift >= 3.0 && zero_worst && elapsed < Duration::from_secs(120),
        format!(
            "s1 {s1:.4}, s3(λ=5) {:.4}, uplift {uplift:.2} points, λ=0 worst: {zero_worst}, {elapsed:.2?}",
            accuracy[5]
        ),
    )
}

fn run(bin: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_owned())
    }
}

fn threads_do_not_change_report(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_visalign");
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let (data, proj) = (dir.join("data"), dir.join("proj"));
    let (one, eight) = (dir.join("t1.json"), dir.join("t8.json"));
    run(
        bin,
        &[
            "gen-synthetic",
            "--classes",
            "100",
            "--dim-text",
            "24",
            "--dim-vis",
            "16",
            "--rank",
            "8",
            "--noise",
            "1.5",
            "--seed",
            "8",
            "--out",
            &s(&data),
        ],
    )?;
    run(
        bin,
        &[
            "align",
            "--data",
            &s(&data),
            "--dim",
            "8",
            "--out",
            &s(&proj),
        ],
    )?;
    for (threads, report) in [("1", &one), ("8", &eight)] {
        run(
            bin,
            &[
                "eval",
                "--data",
                &s(&data),
                "--variant",
                "s3",
                "--lambda",
                "5",
                "--proj",
                &s(&proj),
                "--k-shot",
                "1",
                "--threads",
                threads,
                "--report",
                &s(report),
            ],
        )?;
    }
    let (a, b) = (std::fs::read(&one).unwrap(), std::fs::read(&eight).unwrap());
    check(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn balanced_interval() -> Outcome {
    let values: Vec<f64> = (0..600).map(|i| f64::from(u8::from(i >= 300))).collect();
    let (_, half) = confidence_interval(&values).map_err(|e| e.to_string())?;
    let s = (150.0f64 / 599.0).sqrt();
    let expected = 1.96 * s / 600f64.sqrt();
    check(
        (half - expected).abs() < 1e-12,
        format!("half width {half:.6} vs 1.96·s/√600 = {expected:.6}"),
    )
}

fn main() {
    let data = correlated(1.0);
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        (
            "CCA correlations match generalized-eigen oracle",
            Box::new(cca_matches_oracle),
        ),
        (
            "CCA+D on full-rank square inputs equals A2A4",
            Box::new(dewhiten_reduces_to_rotation),
        ),
        (
            "whitening and rotation are orthonormal",
            Box::new(whitening_orthonormality),
        ),
        (
            "lambda=0 s2/s3 reports equal s1 bit for bit",
            Box::new(|| zero_lambda_matches_s1(&data)),
        ),
        (
            "mapping network gradients match central differences",
            Box::new(gradients_match_differences),
        ),
        (
            "scaling names by 3 leaves every s3 prediction",
            Box::new(|| name_scaling_keeps_predictions(&data)),
        ),
        (
            "s3 uplift on informative text, lambda=0 worst",
            Box::new(|| text_uplift(&data)),
        ),
        (
            "eval report identical for 1 and 8 threads",
            Box::new(|| threads_do_not_change_report(dir.path())),
        ),
        (
            "confidence interval of 300 zeros and 300 ones",
            Box::new(balanced_interval),
        ),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        match criterion() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
