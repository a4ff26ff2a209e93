use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    write_assignments, write_embeddings, write_split, ClassSplit, DataBundle, EmbeddingTable,
    VisualFeatureStore, ASSIGN_FILE, FEATURES_FILE, SPLITS_FILE, TEXT_FILE,
};
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};

pub const GENERATOR_FILE: &str = "generator.json";

/// Parameters of the synthetic generator.
///
/// Class-name embeddings are `n ~ N(0, I)`. A random rank-`rank` linear map
/// `M` sends them to visual space, and the class mean is
/// `signal · M n + √(1 − signal²) · z` with an independent class component
/// `z`. Both `M n` and `z` have expected squared norm 1, as does the image
/// noise before scaling by `noise`, so `noise` is the noise-to-mean ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub classes: usize,
    pub images_per_class: usize,
    pub dim_text: usize,
    pub dim_vis: usize,
    /// Rank of `M`; defaults to `min(dim_text, dim_vis)`.
    pub rank: Option<usize>,
    /// Share of the class mean explained by the text, in `[0, 1]`.
    pub signal: f64,
    pub noise: f64,
    /// Class counts of the validation and novel splits; the rest is base.
    /// Default to 16% and 20% of the classes.
    pub val_classes: Option<usize>,
    pub novel_classes: Option<usize>,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            classes: 100,
            images_per_class: 30,
            dim_text: 64,
            dim_vis: 32,
            rank: None,
            signal: 1.0,
            noise: 0.5,
            val_classes: None,
            novel_classes: None,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn effective_rank(&self) -> usize {
        self.rank.unwrap_or(self.dim_text.min(self.dim_vis))
    }

    /// `(base, val, novel)` class counts.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let c = self.classes as f64;
        let novel = self
            .novel_classes
            .unwrap_or(((0.2 * c).round() as usize).max(1));
        let val = self.val_classes.unwrap_or((0.16 * c).round() as usize);
        (self.classes.saturating_sub(novel + val), val, novel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0
            || self.images_per_class == 0
            || self.dim_text == 0
            || self.dim_vis == 0
        {
            return Err(Error::InvalidInput(
                "generator sizes must be positive".into(),
            ));
        }
        let rank = self.effective_rank();
        if rank == 0 || rank > self.dim_text.min(self.dim_vis) {
            return Err(Error::InvalidInput(format!(
                "rank {rank} outside 1..={}",
                self.dim_text.min(self.dim_vis)
            )));
        }
        if !(0.0..=1.0).contains(&self.signal) {
            return Err(Error::InvalidInput(format!(
                "signal must lie in [0, 1], got {}",
                self.signal
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        let (_, val, novel) = self.split_sizes();
        if novel == 0 || novel + val >= self.classes {
            return Err(Error::InvalidInput(format!(
                "cannot split {} classes into base/val/novel with val={:?} novel={:?}",
                self.classes, self.val_classes, self.novel_classes
            )));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `rows × k` matrix with orthonormal columns.
fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Result<Matrix<f64>> {
    let g = Matrix::new(rows, k, gaussian(rng, rows * k))?;
    Ok(svd(&g)?.u.leading_columns(k))
}

/// Rounds through `f32` so the in-memory bundle equals what is written.
fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

pub fn class_name(c: usize, total: usize) -> String {
    format!("c{c:0w$}", w = digits(total))
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

/// Generates a bundle in memory. Identical configs give identical bundles.
pub fn generate(config: &GeneratorConfig) -> Result<DataBundle> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rank = config.effective_rank();
    let p = orthonormal(&mut rng, config.dim_vis, rank)?;
    let q = orthonormal(&mut rng, config.dim_text, rank)?;
    // M = P Qᵀ / √r, stored transposed for row-vector products.
    let map_t = q.matmul(&p.transpose())?.scale(1.0 / (rank as f64).sqrt());
    let unit = 1.0 / (config.dim_vis as f64).sqrt();
    let signal = config.signal;
    let residual = (1.0 - signal * signal).max(0.0).sqrt();

    let mut text = EmbeddingTable::new(config.dim_text, "text");
    let mut features = EmbeddingTable::new(config.dim_vis, "features");
    let mut assign = Vec::with_capacity(config.classes * config.images_per_class);
    let img_w = digits(config.images_per_class);
    for c in 0..config.classes {
        let name = class_name(c, config.classes);
        let n = gaussian(&mut rng, config.dim_text);
        let z = gaussian(&mut rng, config.dim_vis);
        let projected = map_t.vec_mul(&n)?;
        let mean: Vec<f64> = projected
            .iter()
            .zip(&z)
            .map(|(m, z)| signal * m + residual * unit * z)
            .collect();
        text.push(name.clone(), quantize(n))?;
        for i in 0..config.images_per_class {
            let eps = gaussian(&mut rng, config.dim_vis);
            let image: Vec<f64> = mean
                .iter()
                .zip(&eps)
                .map(|(m, e)| m + config.noise * unit * e)
                .collect();
            let id = format!("{name}_i{i:0img_w$}");
            features.push(id.clone(), quantize(image))?;
            assign.push((id, name.clone()));
        }
    }
    let store = VisualFeatureStore::new(features, assign)?;
    let (base, val, _) = config.split_sizes();
    let names: Vec<String> = (0..config.classes)
        .map(|c| class_name(c, config.classes))
        .collect();
    let split = ClassSplit::new(
        names[..base].to_vec(),
        names[base..base + val].to_vec(),
        names[base + val..].to_vec(),
    )?;
    DataBundle::new(text, store, split)
}

/// Writes `bundle` with the standard file names, plus the generator config.
pub fn write_bundle(
    bundle: &DataBundle,
    config: Option<&GeneratorConfig>,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_embeddings(&bundle.text, dir.join(TEXT_FILE))?;
    write_embeddings(bundle.store.features(), dir.join(FEATURES_FILE))?;
    let pairs: Vec<(&str, &str)> = bundle
        .store
        .features()
        .labels()
        .iter()
        .filter_map(|id| bundle.store.class_of(id).map(|c| (id.as_str(), c)))
        .collect();
    write_assignments(dir.join(ASSIGN_FILE), pairs)?;
    write_split(&bundle.split, dir.join(SPLITS_FILE))?;
    if let Some(config) = config {
        let path = dir.join(GENERATOR_FILE);
        let text = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// [`generate`] followed by [`write_bundle`].
pub fn gen_synthetic(config: &GeneratorConfig, dir: impl AsRef<Path>) -> Result<DataBundle> {
    let bundle = generate(config)?;
    write_bundle(&bundle, Some(config), dir)?;
    Ok(bundle)
}
