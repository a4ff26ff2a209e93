//! Query-to-class similarity scores and the softmax classification head.
//!
//! Every score starts from the negative squared Euclidean distance between
//! the query feature and the class's visual prototype. The text-aware
//! variants add `λ · cos(·, ·)` between the query and a textual prototype:
//! the mapped name `g(n)` for [`Variant::S2`], or the aligned projections
//! `qB` and `nA` for [`Variant::S3`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cem::ProjectionPair;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mapnet::MapNet;
use crate::prototypes::PrototypeSet;
use crate::scalar::{dot, Real};

/// Norms below this make a cosine similarity 0.
pub const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Distance only.
    S1,
    /// Distance plus cosine to the mapping network's output.
    S2,
    /// Distance plus cosine in the aligned subspace.
    S3,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::S1 => "s1",
            Variant::S2 => "s2",
            Variant::S3 => "s3",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Variant::S1),
            "s2" => Ok(Variant::S2),
            "s3" => Ok(Variant::S3),
            other => Err(Error::InvalidInput(format!(
                "unknown score variant `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub variant: Variant,
    pub lambda: f64,
}

impl ScoringConfig {
    pub fn new(variant: Variant, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(ScoringConfig { variant, lambda })
    }
}

/// Cosine similarity; 0 when either vector's norm is below
/// [`COSINE_NORM_FLOOR`].
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    let floor = T::of(COSINE_NORM_FLOOR);
    if na < floor || nb < floor {
        return T::zero();
    }
    dot(a, b) / (na * nb)
}

pub fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::dims(what, expected, got));
    }
    Ok(())
}

/// `score_c = −‖q − v_c‖²`.
pub fn score_s1<T: Real>(q: &[T], protos: &PrototypeSet<T>) -> Result<Vec<T>> {
    check_dim("query feature", protos.dim(), q.len())?;
    Ok((0..protos.len())
        .map(|c| -squared_distance(q, protos.prototype(c)))
        .collect())
}

/// `score_c = −‖q − v_c‖² + λ · cos(query_view, targets_c)`.
///
/// `targets` holds one textual prototype per class, row-aligned with
/// `protos`. With `λ = 0` the result equals [`score_s1`] bit for bit.
pub fn score_with_text<T: Real>(
    q: &[T],
    protos: &PrototypeSet<T>,
    query_view: &[T],
    targets: &Matrix<T>,
    lambda: T,
) -> Result<Vec<T>> {
    check_dim("textual prototypes", protos.len(), targets.rows())?;
    check_dim("query view", targets.cols(), query_view.len())?;
    let mut scores = score_s1(q, protos)?;
    for (c, s) in scores.iter_mut().enumerate() {
        *s += lambda * cosine(query_view, targets.row(c));
    }
    Ok(scores)
}

/// s2 with `names` (one class-name embedding per prototype row) mapped by
/// `net` in evaluation mode.
pub fn score_s2<T: Real>(
    q: &[T],
    protos: &PrototypeSet<T>,
    names: &Matrix<T>,
    net: &MapNet<T>,
    lambda: T,
) -> Result<Vec<T>> {
    check_dim("mapping network output", protos.dim(), net.output_dim())?;
    let mapped = net.forward_eval(names)?;
    score_with_text(q, protos, q, &mapped, lambda)
}

/// s3: cosine between `qB` and `nᶜA`.
pub fn score_s3<T: Real>(
    q: &[T],
    protos: &PrototypeSet<T>,
    names: &Matrix<T>,
    pair: &ProjectionPair<T>,
    lambda: T,
) -> Result<Vec<T>> {
    let projected = project_names(names, pair)?;
    let qb = pair.project_visual(q)?;
    score_with_text(q, protos, &qb, &projected, lambda)
}

/// Projects every row of `names` through `A`.
pub fn project_names<T: Real>(names: &Matrix<T>, pair: &ProjectionPair<T>) -> Result<Matrix<T>> {
    let mut out = Matrix::zeros(names.rows(), pair.dim());
    for i in 0..names.rows() {
        out.row_mut(i)
            .copy_from_slice(&pair.project_text(names.row(i))?);
    }
    Ok(out)
}

/// Numerically stable softmax and cross-entropy `−log p_true`.
pub fn softmax_ce<T: Real>(scores: &[T], true_index: usize) -> Result<(Vec<T>, T)> {
    if true_index >= scores.len() {
        return Err(Error::InvalidInput(format!(
            "true index {true_index} out of range for {} scores",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let probs = exps.iter().map(|&e| e / total).collect();
    let s_true = scores[true_index];
    let loss = if s_true == max {
        // log(1 + Σ_{others} e^(s − max)) keeps saturated losses from
        // rounding to zero.
        let rest: T = exps
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != true_index)
            .map(|(_, &e)| e)
            .sum();
        rest.ln_1p()
    } else {
        (max - s_true) + total.ln()
    };
    Ok((probs, loss))
}

/// Index of the largest score; ties go to the lowest index.
pub fn classify<T: Real>(scores: &[T]) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("cannot classify an empty score vector".into()))
}
