use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem::ProjectionPair;
use crate::data::{DataBundle, Section};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mapnet::MapNet;
use crate::prototypes::episode_prototypes;
use crate::scoring::{classify, score_s1, score_with_text, ScoringConfig, Variant};

use super::sampler::{episode_rng, sample_episode, Episode};
use super::stats::confidence_interval;

pub const DEFAULT_QUERY: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub variant: Variant,
    pub lambda: f64,
    pub n_way: usize,
    pub k_shot: usize,
    pub query: usize,
    pub episodes: usize,
    pub section: Section,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            variant: Variant::S1,
            lambda: 0.0,
            n_way: 5,
            k_shot: 1,
            query: DEFAULT_QUERY,
            episodes: 600,
            section: Section::Novel,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    pub ci95_half_width: f64,
    pub episodes: usize,
    pub seed: u64,
    pub config: EvalConfig,
    pub per_episode: Vec<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Text-side assets a variant may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct TextAssets<'a> {
    pub pair: Option<&'a ProjectionPair<f64>>,
    pub net: Option<&'a MapNet<f64>>,
}

/// Per-class textual prototypes, computed once per evaluation.
enum TextView {
    None,
    /// cos(q, g(n))
    Mapped(HashMap<String, Vec<f64>>),
    /// cos(qB, nA)
    Aligned(HashMap<String, Vec<f64>>),
}

fn text_view(
    variant: Variant,
    bundle: &DataBundle,
    section: Section,
    assets: TextAssets<'_>,
) -> Result<TextView> {
    let classes = bundle.split.section(section);
    match variant {
        Variant::S1 => Ok(TextView::None),
        Variant::S2 => {
            let net = assets
                .net
                .ok_or_else(|| Error::InvalidInput("variant s2 needs a mapping network".into()))?;
            if net.output_dim() != bundle.store.dim() {
                return Err(Error::dims(
                    "mapping network output",
                    bundle.store.dim(),
                    net.output_dim(),
                ));
            }
            // Eval-mode batch norm uses running statistics, so rows map independently.
            let mapped = net.forward_eval(&bundle.text.to_matrix(classes)?)?;
            Ok(TextView::Mapped(
                classes
                    .iter()
                    .cloned()
                    .zip(mapped.row_iter().map(<[f64]>::to_vec))
                    .collect(),
            ))
        }
        Variant::S3 => {
            let pair = assets
                .pair
                .ok_or_else(|| Error::InvalidInput("variant s3 needs a projection pair".into()))?;
            if pair.visual_dim() != bundle.store.dim() {
                return Err(Error::dims(
                    "projection B rows",
                    bundle.store.dim(),
                    pair.visual_dim(),
                ));
            }
            let mut out = HashMap::with_capacity(classes.len());
            for class in classes {
                out.insert(
                    class.clone(),
                    pair.project_text(bundle.text.require(class)?)?,
                );
            }
            Ok(TextView::Aligned(out))
        }
    }
}

/// Accuracy of one episode: fraction of queries whose argmax score is
/// their own class.
fn episode_accuracy(
    episode: &Episode,
    bundle: &DataBundle,
    view: &TextView,
    pair: Option<&ProjectionPair<f64>>,
    lambda: f64,
) -> Result<f64> {
    let protos = episode_prototypes::<f64>(&episode.support, &bundle.store)?;
    let targets = match view {
        TextView::None => None,
        TextView::Mapped(map) | TextView::Aligned(map) => {
            let rows: Vec<&[f64]> = protos.classes().iter().map(|c| map[c].as_slice()).collect();
            Some(Matrix::from_rows(&rows)?)
        }
    };
    let mut correct = 0usize;
    for (image, class) in &episode.query {
        let q = bundle.store.require_feature(image)?;
        let scores = match (view, &targets) {
            (TextView::Mapped(..), Some(t)) => score_with_text(q, &protos, q, t, lambda)?,
            (TextView::Aligned(..), Some(t)) => {
                let qb = pair.expect("aligned view has a pair").project_visual(q)?;
                score_with_text(q, &protos, &qb, t, lambda)?
            }
            _ => score_s1(q, &protos)?,
        };
        if protos.classes()[classify(&scores)?] == *class {
            correct += 1;
        }
    }
    Ok(correct as f64 / episode.query.len() as f64)
}

/// Runs `config.episodes` episodes on `config.section`, in parallel on
/// `threads` workers (0 = all cores). Episode `i` is sampled with
/// [`episode_rng`]`(seed, i)` and accuracies are kept by index, so the report
/// does not depend on the worker count.
pub fn evaluate(
    config: &EvalConfig,
    bundle: &DataBundle,
    assets: TextAssets<'_>,
    threads: usize,
) -> Result<EvalReport> {
    ScoringConfig::new(config.variant, config.lambda)?;
    if config.episodes < 2 {
        return Err(Error::InvalidInput(format!(
            "evaluation needs at least 2 episodes, got {}",
            config.episodes
        )));
    }
    let view = text_view(config.variant, bundle, config.section, assets)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let per_episode = pool.install(|| {
        (0..config.episodes)
            .into_par_iter()
            .map(|i| {
                let mut rng = episode_rng(config.seed, i as u64);
                let episode = sample_episode(
                    &bundle.split,
                    config.section,
                    &bundle.store,
                    config.n_way,
                    config.k_shot,
                    config.query,
                    &mut rng,
                )?;
                episode_accuracy(&episode, bundle, &view, assets.pair, config.lambda)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let (mean_accuracy, ci95_half_width) = confidence_interval(&per_episode)?;
    Ok(EvalReport {
        mean_accuracy,
        ci95_half_width,
        episodes: config.episodes,
        seed: config.seed,
        config: *config,
        per_episode,
    })
}
