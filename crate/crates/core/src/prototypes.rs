//! Visual prototypes: per-episode class means over support images and
//! global class means over every assigned image.

use indexmap::IndexMap;

use crate::data::VisualFeatureStore;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// One prototype row per class; row `i` belongs to `classes[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    classes: Vec<String>,
    matrix: Matrix<T>,
}

impl<T: Real> PrototypeSet<T> {
    pub fn new(classes: Vec<String>, matrix: Matrix<T>) -> Result<Self> {
        if classes.len() != matrix.rows() {
            return Err(Error::dims("prototype rows", classes.len(), matrix.rows()));
        }
        Ok(PrototypeSet { classes, matrix })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn prototype(&self, i: usize) -> &[T] {
        self.matrix.row(i)
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }
}

/// Mean of the given images' features, summed in `f64` in image-id order so
/// the result does not depend on how the ids were listed.
fn mean_feature(store: &VisualFeatureStore, images: &mut [&str]) -> Result<Vec<f64>> {
    images.sort_unstable();
    let mut acc = vec![0.0f64; store.dim()];
    for image in images.iter() {
        for (a, v) in acc.iter_mut().zip(store.require_feature(image)?) {
            *a += v;
        }
    }
    let n = images.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

fn assemble<T: Real>(
    classes: Vec<String>,
    rows: Vec<Vec<f64>>,
    dim: usize,
) -> Result<PrototypeSet<T>> {
    let data = rows.into_iter().flatten().map(T::of).collect();
    PrototypeSet::new(classes.clone(), Matrix::new(classes.len(), dim, data)?)
}

/// Prototype of each class = mean feature of its support images. Classes
/// appear in first-appearance order of `support`; every class must have the
/// same number of support images.
pub fn episode_prototypes<T: Real>(
    support: &[(String, String)],
    store: &VisualFeatureStore,
) -> Result<PrototypeSet<T>> {
    if support.is_empty() {
        return Err(Error::InvalidInput("empty support set".into()));
    }
    let mut groups: IndexMap<&str, Vec<&str>> = IndexMap::new();
    for (image, class) in support {
        groups
            .entry(class.as_str())
            .or_default()
            .push(image.as_str());
    }
    let shots = groups[0].len();
    let mut classes = Vec::with_capacity(groups.len());
    let mut rows = Vec::with_capacity(groups.len());
    for (class, mut images) in groups {
        if images.len() != shots {
            return Err(Error::InvalidInput(format!(
                "class `{class}` has {} support images, expected {shots}",
                images.len()
            )));
        }
        rows.push(mean_feature(store, &mut images)?);
        classes.push(class.to_owned());
    }
    assemble(classes, rows, store.dim())
}

/// Row `c` = mean feature over every image assigned to `classes[c]`.
pub fn global_prototypes<T: Real, S: AsRef<str>>(
    store: &VisualFeatureStore,
    classes: &[S],
) -> Result<PrototypeSet<T>> {
    let mut rows = Vec::with_capacity(classes.len());
    for class in classes {
        let class = class.as_ref();
        let mut images = store.images_of(class);
        if images.is_empty() {
            return Err(Error::InvalidInput(format!(
                "class `{class}` has no assigned images"
            )));
        }
        rows.push(mean_feature(store, &mut images)?);
    }
    assemble(
        classes.iter().map(|c| c.as_ref().to_owned()).collect(),
        rows,
        store.dim(),
    )
}
