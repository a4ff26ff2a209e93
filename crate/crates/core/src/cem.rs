//! Correlation exploration: linear maps `A` (text → d) and `B` (visual → d)
//! aligning class-name embeddings with global visual prototypes.
//!
//! The fit is a chain of linear steps applied to the class-name matrix `X₀`
//! (one row per class) and the prototype matrix `Y₀`:
//!
//! 1. whitening, `A₁ = (X₀ᵀX₀)^(-1/2)` and `B₁ = (Y₀ᵀY₀)^(-1/2)`, taken as
//!    pseudo-inverse square roots because `X₀ᵀX₀` is rank deficient whenever
//!    there are fewer classes than dimensions;
//! 2. orthogonal alignment from the full SVD `X₁ᵀY₁ = A₂ S B₂ᵀ`;
//! 3. optional de-whitening, `A₃ = A₂ᵀ (X₀ᵀX₀)^(1/2) A₂`;
//! 4. truncation to the leading `d` columns.
//!
//! Plain CCA returns `A = A₁A₂A₄`; CCA with de-whitening returns
//! `A = A₁A₂A₃A₄`, and likewise for `B`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{load_matrix, write_matrix, EmbeddingTable, VisualFeatureStore};
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_psd, sqrt_psd, svd, Matrix};
use crate::prototypes::global_prototypes;
use crate::scalar::Real;

pub const DEFAULT_EPS_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignMethod {
    #[serde(rename = "cca")]
    Cca,
    /// CCA followed by de-whitening.
    #[serde(rename = "cca+d")]
    CcaDewhiten,
}

impl fmt::Display for AlignMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignMethod::Cca => "cca",
            AlignMethod::CcaDewhiten => "cca+d",
        })
    }
}

impl FromStr for AlignMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cca" => Ok(AlignMethod::Cca),
            "cca+d" | "ccad" | "cca-d" => Ok(AlignMethod::CcaDewhiten),
            other => Err(Error::InvalidInput(format!(
                "unknown alignment method `{other}` (expected cca or cca+d)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub method: AlignMethod,
    /// Target dimension `d`.
    pub dim: usize,
    /// Relative eigenvalue floor for the pseudo-inverse square roots.
    pub eps_rel: f64,
    /// Subtract column means before fitting (and before projecting).
    pub center: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            method: AlignMethod::CcaDewhiten,
            dim: 50,
            eps_rel: DEFAULT_EPS_REL,
            center: false,
        }
    }
}

impl AlignmentConfig {
    pub fn new(method: AlignMethod, dim: usize) -> Self {
        AlignmentConfig {
            method,
            dim,
            ..Default::default()
        }
    }

    pub fn centered(mut self, center: bool) -> Self {
        self.center = center;
        self
    }

    fn validate(&self, text_dim: usize, visual_dim: usize) -> Result<()> {
        if self.dim == 0 || self.dim > text_dim.min(visual_dim) {
            return Err(Error::InvalidInput(format!(
                "target dimension {} outside 1..={}",
                self.dim,
                text_dim.min(visual_dim)
            )));
        }
        if !(self.eps_rel > 0.0 && self.eps_rel.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "eps_rel must be positive, got {}",
                self.eps_rel
            )));
        }
        Ok(())
    }
}

/// Fitted text and visual projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair<T> {
    a: Matrix<T>,
    b: Matrix<T>,
    config: AlignmentConfig,
    correlations: Vec<T>,
    class_count: usize,
    text_mean: Option<Vec<T>>,
    visual_mean: Option<Vec<T>>,
}

/// Intermediate matrices of a fit, kept for inspection and testing.
#[derive(Debug, Clone)]
pub struct AlignmentSteps<T> {
    /// `X₀` and `Y₀` after optional centering.
    pub text: Matrix<T>,
    pub visual: Matrix<T>,
    /// Whitening maps `A₁`, `B₁`.
    pub whiten_text: Matrix<T>,
    pub whiten_visual: Matrix<T>,
    /// Pseudo square roots `A₁⁻¹`, `B₁⁻¹` used for de-whitening.
    pub unwhiten_text: Matrix<T>,
    pub unwhiten_visual: Matrix<T>,
    /// Orthogonal alignments `A₂` (m_t×m_t), `B₂` (m_v×m_v).
    pub rotate_text: Matrix<T>,
    pub rotate_visual: Matrix<T>,
    /// All singular values of the whitened cross product `X₁ᵀY₁`.
    pub singular_values: Vec<T>,
    /// Number of singular values above the rank threshold.
    pub rank: usize,
}

impl<T: Real> AlignmentSteps<T> {
    /// De-whitening `A₃ = A₂ᵀ A₁⁻¹ A₂`.
    pub fn dewhiten_text(&self) -> Result<Matrix<T>> {
        self.rotate_text
            .transpose()
            .matmul(&self.unwhiten_text)?
            .matmul(&self.rotate_text)
    }

    /// De-whitening `B₃ = B₂ᵀ B₁⁻¹ B₂`.
    pub fn dewhiten_visual(&self) -> Result<Matrix<T>> {
        self.rotate_visual
            .transpose()
            .matmul(&self.unwhiten_visual)?
            .matmul(&self.rotate_visual)
    }
}

/// Fits `A` and `B` from row-aligned class matrices `X₀` (C×m_t) and `Y₀`
/// (C×m_v).
pub fn fit<T: Real>(
    x0: &Matrix<T>,
    y0: &Matrix<T>,
    config: &AlignmentConfig,
) -> Result<ProjectionPair<T>> {
    fit_with_steps(x0, y0, config).map(|(pair, _)| pair)
}

/// Fits on `classes`: `X₀` rows are their name embeddings, `Y₀` rows their
/// global visual prototypes.
pub fn fit_classes<S: AsRef<str>>(
    text: &EmbeddingTable,
    store: &VisualFeatureStore,
    classes: &[S],
    config: &AlignmentConfig,
) -> Result<ProjectionPair<f64>> {
    let x0 = text.to_matrix(classes)?;
    let y0 = global_prototypes::<f64, S>(store, classes)?;
    fit(&x0, y0.matrix(), config)
}

pub fn fit_with_steps<T: Real>(
    x0: &Matrix<T>,
    y0: &Matrix<T>,
    config: &AlignmentConfig,
) -> Result<(ProjectionPair<T>, AlignmentSteps<T>)> {
    if x0.rows() != y0.rows() {
        return Err(Error::dims(
            "class rows of visual matrix",
            x0.rows(),
            y0.rows(),
        ));
    }
    if x0.rows() < 2 {
        return Err(Error::InvalidInput(format!(
            "alignment needs at least 2 classes, got {}",
            x0.rows()
        )));
    }
    if !x0.is_finite() || !y0.is_finite() {
        return Err(Error::InvalidInput("non-finite alignment input".into()));
    }
    config.validate(x0.cols(), y0.cols())?;
    let eps = T::of(config.eps_rel);

    let (text, text_mean) = maybe_center(x0, config.center)?;
    let (visual, visual_mean) = maybe_center(y0, config.center)?;
    if text.max_abs() == T::zero() {
        return Err(Error::Degenerate(
            "class-name embeddings are all zero".into(),
        ));
    }
    if visual.max_abs() == T::zero() {
        return Err(Error::Degenerate("visual prototypes are all zero".into()));
    }

    let gram_text = text.gram();
    let gram_visual = visual.gram();
    let whiten_text = inv_sqrt_psd(&gram_text, eps)?;
    let whiten_visual = inv_sqrt_psd(&gram_visual, eps)?;
    let unwhiten_text = sqrt_psd(&gram_text, eps)?;
    let unwhiten_visual = sqrt_psd(&gram_visual, eps)?;

    let x1 = text.matmul(&whiten_text)?;
    let y1 = visual.matmul(&whiten_visual)?;
    let cross = x1.t_matmul(&y1)?;
    let dec = svd(&cross)?;
    let s_max = dec.singular_values.first().copied().unwrap_or_else(T::zero);
    let threshold = s_max * eps.sqrt();
    let rank = dec
        .singular_values
        .iter()
        .take_while(|&&s| s > threshold && s > T::zero())
        .count();
    if config.dim > rank {
        return Err(Error::Rank {
            requested: config.dim,
            rank,
        });
    }

    let rotate_text = dec.u;
    let rotate_visual = dec.vt.transpose();
    let d = config.dim;

    // Products are associated right to left so every intermediate is m×d.
    let chain =
        |whiten: &Matrix<T>, unwhiten: &Matrix<T>, rotate: &Matrix<T>| -> Result<Matrix<T>> {
            let selected = rotate.leading_columns(d);
            let tail = match config.method {
                AlignMethod::Cca => selected,
                AlignMethod::CcaDewhiten => {
                    let dewhitened = rotate.t_matmul(&unwhiten.matmul(&selected)?)?;
                    rotate.matmul(&dewhitened)?
                }
            };
            whiten.matmul(&tail)
        };
    let a = chain(&whiten_text, &unwhiten_text, &rotate_text)?;
    let b = chain(&whiten_visual, &unwhiten_visual, &rotate_visual)?;

    let pair = ProjectionPair {
        a,
        b,
        config: *config,
        correlations: dec.singular_values[..d].to_vec(),
        class_count: x0.rows(),
        text_mean,
        visual_mean,
    };
    let steps = AlignmentSteps {
        text,
        visual,
        whiten_text,
        whiten_visual,
        unwhiten_text,
        unwhiten_visual,
        rotate_text,
        rotate_visual,
        singular_values: dec.singular_values,
        rank,
    };
    Ok((pair, steps))
}

fn maybe_center<T: Real>(m: &Matrix<T>, center: bool) -> Result<(Matrix<T>, Option<Vec<T>>)> {
    if center {
        let means = m.column_means();
        Ok((m.center_rows(&means)?, Some(means)))
    } else {
        Ok((m.clone(), None))
    }
}

fn project<T: Real>(v: &[T], mean: Option<&[T]>, map: &Matrix<T>, what: &str) -> Result<Vec<T>> {
    if v.len() != map.rows() {
        return Err(Error::dims(what, map.rows(), v.len()));
    }
    match mean {
        Some(mean) => {
            let centered: Vec<T> = v.iter().zip(mean).map(|(&x, &m)| x - m).collect();
            map.vec_mul(&centered)
        }
        None => map.vec_mul(v),
    }
}

impl<T: Real> ProjectionPair<T> {
    /// Assembles a pair from parts (used when loading or converting).
    pub fn from_parts(
        a: Matrix<T>,
        b: Matrix<T>,
        config: AlignmentConfig,
        correlations: Vec<T>,
        class_count: usize,
        text_mean: Option<Vec<T>>,
        visual_mean: Option<Vec<T>>,
    ) -> Result<Self> {
        let d = config.dim;
        if a.cols() != d || b.cols() != d || correlations.len() != d {
            return Err(Error::InvalidInput(format!(
                "projection shapes {:?}/{:?} with {} correlations disagree with d = {d}",
                a.shape(),
                b.shape(),
                correlations.len()
            )));
        }
        if config.center != (text_mean.is_some() && visual_mean.is_some()) {
            return Err(Error::InvalidInput(
                "centering flag disagrees with stored means".into(),
            ));
        }
        if let Some(m) = &text_mean {
            if m.len() != a.rows() {
                return Err(Error::dims("text mean", a.rows(), m.len()));
            }
        }
        if let Some(m) = &visual_mean {
            if m.len() != b.rows() {
                return Err(Error::dims("visual mean", b.rows(), m.len()));
            }
        }
        Ok(ProjectionPair {
            a,
            b,
            config,
            correlations,
            class_count,
            text_mean,
            visual_mean,
        })
    }

    /// `A`, m_t × d.
    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    /// `B`, m_v × d.
    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }

    pub fn config(&self) -> &AlignmentConfig {
        &self.config
    }

    /// Canonical correlations of the retained components, non-increasing.
    pub fn correlations(&self) -> &[T] {
        &self.correlations
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn text_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn visual_dim(&self) -> usize {
        self.b.rows()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn text_mean(&self) -> Option<&[T]> {
        self.text_mean.as_deref()
    }

    pub fn visual_mean(&self) -> Option<&[T]> {
        self.visual_mean.as_deref()
    }

    /// `(n − mean) · A`, without the mean when the fit was not centered.
    pub fn project_text(&self, n: &[T]) -> Result<Vec<T>> {
        project(n, self.text_mean(), &self.a, "text vector")
    }

    /// `(v − mean) · B`, without the mean when the fit was not centered.
    pub fn project_visual(&self, v: &[T]) -> Result<Vec<T>> {
        project(v, self.visual_mean(), &self.b, "visual vector")
    }

    /// Writes `A.cmm`, `B.cmm` and `meta.json` into `dir` (created if needed).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&self.a, dir.join("A.cmm"))?;
        write_matrix(&self.b, dir.join("B.cmm"))?;
        let to_f64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        let meta = PairMeta {
            method: self.config.method,
            d: self.config.dim,
            eps_rel: self.config.eps_rel,
            center: self.config.center,
            m_t: self.text_dim(),
            m_v: self.visual_dim(),
            class_count: self.class_count,
            correlations: to_f64(&self.correlations),
            text_mean: self.text_mean.as_deref().map(to_f64),
            visual_mean: self.visual_mean.as_deref().map(to_f64),
        };
        let path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Reads a pair written by [`save`](Self::save). Matrices come back at
    /// 32-bit precision.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("meta.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: PairMeta = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
        let a: Matrix<T> = load_matrix(dir.join("A.cmm"))?;
        let b: Matrix<T> = load_matrix(dir.join("B.cmm"))?;
        if a.rows() != meta.m_t || b.rows() != meta.m_v {
            return Err(Error::parse(
                &path,
                format!(
                    "meta declares m_t={} m_v={}, matrices are {:?} and {:?}",
                    meta.m_t,
                    meta.m_v,
                    a.shape(),
                    b.shape()
                ),
            ));
        }
        let conv = |v: Vec<f64>| v.into_iter().map(T::of).collect::<Vec<_>>();
        let config = AlignmentConfig {
            method: meta.method,
            dim: meta.d,
            eps_rel: meta.eps_rel,
            center: meta.center,
        };
        Self::from_parts(
            a,
            b,
            config,
            conv(meta.correlations),
            meta.class_count,
            meta.text_mean.map(conv),
            meta.visual_mean.map(conv),
        )
        .map_err(|e| Error::parse(&path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PairMeta {
    method: AlignMethod,
    d: usize,
    eps_rel: f64,
    center: bool,
    m_t: usize,
    m_v: usize,
    class_count: usize,
    correlations: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    visual_mean: Option<Vec<f64>>,
}
