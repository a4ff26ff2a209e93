use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassSplit, Section, VisualFeatureStore};
use crate::error::{Error, Result};

/// One N-way K-shot task. `support` and `query` hold `(image_id, class)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    pub n_query: usize,
    pub support: Vec<(String, String)>,
    pub query: Vec<(String, String)>,
}

impl Episode {
    /// Classes in support order.
    pub fn classes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::with_capacity(self.n_way);
        for (_, c) in &self.support {
            if !out.contains(&c.as_str()) {
                out.push(c);
            }
        }
        out
    }
}

/// Generator for episode `index` under master `seed`: the ChaCha stream
/// number is the episode index, so episodes are independent of scheduling.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `n_way` distinct classes of `section`, then `k_shot + n_query`
/// distinct images per class; the first `k_shot` go to the support set.
///
/// Every class in the section must hold at least `k_shot + n_query` images,
/// so whether sampling can succeed does not depend on the generator.
pub fn sample_episode<R: Rng + ?Sized>(
    split: &ClassSplit,
    section: Section,
    store: &VisualFeatureStore,
    n_way: usize,
    k_shot: usize,
    n_query: usize,
    rng: &mut R,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 || n_query == 0 {
        return Err(Error::InvalidInput(format!(
            "episode shape must be positive, got N={n_way} K={k_shot} Q={n_query}"
        )));
    }
    let classes = split.section(section);
    if classes.len() < n_way {
        return Err(Error::Capacity(format!(
            "{section} split has {} classes, {n_way}-way episodes need {n_way}",
            classes.len()
        )));
    }
    let per_class = k_shot + n_query;
    if let Some(short) = classes.iter().find(|c| store.image_count(c) < per_class) {
        return Err(Error::Capacity(format!(
            "class `{short}` has {} images, need {per_class} (K={k_shot} + Q={n_query})",
            store.image_count(short)
        )));
    }
    let mut support = Vec::with_capacity(n_way * k_shot);
    let mut query = Vec::with_capacity(n_way * n_query);
    for ci in index::sample(rng, classes.len(), n_way).into_iter() {
        let class = &classes[ci];
        let images = store.images_of(class);
        let picked = index::sample(rng, images.len(), per_class);
        for (slot, ii) in picked.into_iter().enumerate() {
            let entry = (images[ii].to_owned(), class.clone());
            if slot < k_shot {
                support.push(entry);
            } else {
                query.push(entry);
            }
        }
    }
    Ok(Episode {
        n_way,
        k_shot,
        n_query,
        support,
        query,
    })
}
