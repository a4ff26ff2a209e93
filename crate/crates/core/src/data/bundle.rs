use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{
    concat_tables, load_assignments, load_embeddings, load_split, ClassSplit, EmbeddingTable,
    VisualFeatureStore,
};

pub const TEXT_FILE: &str = "text.cmv";
pub const FEATURES_FILE: &str = "features.cmv";
pub const ASSIGN_FILE: &str = "assign.csv";
pub const SPLITS_FILE: &str = "splits.json";

/// Class-name embeddings, frozen visual features and the class split.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub text: EmbeddingTable,
    pub store: VisualFeatureStore,
    pub split: ClassSplit,
}

/// File locations of a bundle. Several text files are concatenated in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundlePaths {
    pub text: Vec<PathBuf>,
    pub features: PathBuf,
    pub assign: PathBuf,
    pub splits: PathBuf,
}

impl BundlePaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        BundlePaths {
            text: vec![dir.join(TEXT_FILE)],
            features: dir.join(FEATURES_FILE),
            assign: dir.join(ASSIGN_FILE),
            splits: dir.join(SPLITS_FILE),
        }
    }
}

impl DataBundle {
    /// Checks that every split class has assigned images.
    pub fn new(text: EmbeddingTable, store: VisualFeatureStore, split: ClassSplit) -> Result<Self> {
        split.validate()?;
        split.validate_against(&store)?;
        Ok(DataBundle { text, store, split })
    }

    pub fn load(paths: &BundlePaths) -> Result<Self> {
        if paths.text.is_empty() {
            return Err(Error::InvalidInput(
                "at least one text embedding file is required".into(),
            ));
        }
        let tables = paths
            .text
            .iter()
            .map(load_embeddings)
            .collect::<Result<Vec<_>>>()?;
        let text = if tables.len() == 1 {
            tables.into_iter().next().expect("one table")
        } else {
            concat_tables(&tables.iter().collect::<Vec<_>>())?
        };
        let features = load_embeddings(&paths.features)?;
        let store = load_assignments(&paths.assign, features)?;
        let split = load_split(&paths.splits)?;
        DataBundle::new(text, store, split)
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        Self::load(&BundlePaths::in_dir(dir))
    }

    /// The same bundle with every class-name embedding multiplied by `c`.
    pub fn with_scaled_text(&self, c: f64) -> Self {
        DataBundle {
            text: self.text.scaled(c),
            store: self.store.clone(),
            split: self.split.clone(),
        }
    }
}
