use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

use super::EmbeddingTable;

/// Frozen image features plus the image → class assignment.
///
/// Images of a class are kept in assignment-file order, which makes episode
/// sampling reproducible for a given seed.
#[derive(Debug, Clone)]
pub struct VisualFeatureStore {
    features: EmbeddingTable,
    class_of: HashMap<usize, String>,
    by_class: IndexMap<String, Vec<usize>>,
}

impl VisualFeatureStore {
    /// Joins features (labels are image ids) with `(image_id, class)` pairs.
    pub fn new<I>(features: EmbeddingTable, assignments: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut class_of = HashMap::new();
        let mut by_class: IndexMap<String, Vec<usize>> = IndexMap::new();
        for (image, class) in assignments {
            let row = features.position(&image).ok_or_else(|| {
                Error::InvalidInput(format!("assigned image `{image}` has no feature vector"))
            })?;
            if class_of.insert(row, class.clone()).is_some() {
                return Err(Error::DuplicateLabel(image));
            }
            by_class.entry(class).or_default().push(row);
        }
        Ok(VisualFeatureStore {
            features,
            class_of,
            by_class,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn features(&self) -> &EmbeddingTable {
        &self.features
    }

    pub fn feature(&self, image: &str) -> Option<&[f64]> {
        self.features.get(image)
    }

    pub fn require_feature(&self, image: &str) -> Result<&[f64]> {
        self.features
            .get(image)
            .ok_or_else(|| Error::InvalidInput(format!("image `{image}` has no feature vector")))
    }

    pub fn class_of(&self, image: &str) -> Option<&str> {
        self.features
            .position(image)
            .and_then(|row| self.class_of.get(&row))
            .map(String::as_str)
    }

    /// Classes in first-assignment order.
    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.by_class.keys().map(String::as_str)
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.by_class.contains_key(class)
    }

    pub fn image_count(&self, class: &str) -> usize {
        self.by_class.get(class).map_or(0, Vec::len)
    }

    /// Image ids of `class`, in assignment order.
    pub fn images_of(&self, class: &str) -> Vec<&str> {
        self.by_class
            .get(class)
            .map(|rows| {
                rows.iter()
                    .map(|&r| self.features.labels()[r].as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Feature vectors of `class`, in assignment order.
    pub fn features_of(&self, class: &str) -> impl Iterator<Item = &[f64]> {
        self.by_class
            .get(class)
            .into_iter()
            .flatten()
            .map(|&r| self.features.vector_at(r))
    }

    /// A copy with every feature vector shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::dims("translation offset", self.dim(), offset.len()));
        }
        let shifted = EmbeddingTable::from_entries(
            self.dim(),
            self.features.variant(),
            self.features.iter().map(|(l, v)| {
                (
                    l.to_owned(),
                    v.iter().zip(offset).map(|(a, b)| a + b).collect(),
                )
            }),
        )?;
        Ok(VisualFeatureStore {
            features: shifted,
            class_of: self.class_of.clone(),
            by_class: self.by_class.clone(),
        })
    }
}

/// Reads an `image_id,class_name` CSV and joins it with `features`.
pub fn load_assignments(
    path: impl AsRef<Path>,
    features: EmbeddingTable,
) -> Result<VisualFeatureStore> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "image_id" || &headers[1] != "class_name" {
        return Err(Error::parse(
            path,
            format!(
                "expected header `image_id,class_name`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut pairs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                format!("line {}: expected 2 fields", line + 2),
            ));
        }
        pairs.push((record[0].to_owned(), record[1].to_owned()));
    }
    VisualFeatureStore::new(features, pairs).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::parse(path, msg),
        Error::DuplicateLabel(id) => Error::parse(path, format!("image `{id}` assigned twice")),
        other => other,
    })
}

/// Writes an assignments CSV with LF line endings.
pub fn write_assignments<'a, I>(path: impl AsRef<Path>, pairs: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let path = path.as_ref();
    let mut out = String::from("image_id,class_name\n");
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for (image, class) in pairs {
        writer
            .write_record([image, class])
            .map_err(|e| Error::parse(path, e))?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}
