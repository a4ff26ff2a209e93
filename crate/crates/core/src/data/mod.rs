//! Embedding tables, visual feature stores, class splits and their on-disk
//! formats.
//!
//! Class names are opaque UTF-8 keys matched by exact, case-sensitive string
//! equality. Floats are 32-bit on disk and 64-bit in memory.

mod bundle;
mod formats;
mod split;
mod store;

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use bundle::{BundlePaths, DataBundle, ASSIGN_FILE, FEATURES_FILE, SPLITS_FILE, TEXT_FILE};
pub use formats::{
    decode_embeddings, decode_matrix, decode_vectors, encode_embeddings, encode_matrix,
    encode_vectors, inspect_file, load_embeddings, load_matrix, write_embeddings, write_matrix,
    FileSummary, VectorRecords, CMMAT_MAGIC, CMVEC_MAGIC,
};
pub use split::{load_split, load_synsets, write_split, ClassSplit, Section};
pub use store::{load_assignments, write_assignments, VisualFeatureStore};

/// Labeled vectors of one modality or embedding variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    variant: String,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, variant: impl Into<String>) -> Self {
        EmbeddingTable {
            dim,
            variant: variant.into(),
            labels: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
        }
    }

    pub fn from_entries<I>(dim: usize, variant: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut t = Self::new(dim, variant);
        for (label, v) in entries {
            t.push(label, v)?;
        }
        Ok(t)
    }

    /// Appends an entry, enforcing unique labels, the table dimension and
    /// finite values.
    pub fn push(&mut self, label: String, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::dims(
                format!("vector for `{label}`"),
                self.dim,
                vector.len(),
            ));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in `{label}`"
            )));
        }
        if self.index.contains_key(&label) {
            return Err(Error::DuplicateLabel(label));
        }
        self.index.insert(label.clone(), self.labels.len());
        self.labels.push(label);
        self.values.extend(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    pub fn set_variant(&mut self, variant: impl Into<String>) {
        self.variant = variant.into();
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.position(label).map(|i| self.vector_at(i))
    }

    /// Like [`get`](Self::get) but fails with [`Error::MissingLabel`].
    pub fn require(&self, label: &str) -> Result<&[f64]> {
        self.get(label)
            .ok_or_else(|| Error::MissingLabel(label.to_owned()))
    }

    pub fn vector_at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.labels
            .iter()
            .enumerate()
            .map(move |(i, l)| (l.as_str(), self.vector_at(i)))
    }

    /// Rows for `labels`, in that order.
    pub fn to_matrix<S: AsRef<str>>(&self, labels: &[S]) -> Result<Matrix<f64>> {
        let mut data = Vec::with_capacity(labels.len() * self.dim);
        for l in labels {
            data.extend_from_slice(self.require(l.as_ref())?);
        }
        Matrix::new(labels.len(), self.dim, data)
    }

    /// Every vector multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    fn label_set(&self) -> BTreeSet<&str> {
        self.labels.iter().map(String::as_str).collect()
    }
}

/// Concatenates tables per label, in argument order. Row order follows the
/// first table; the variant tag joins the inputs' tags with `+`.
pub fn concat_tables(tables: &[&EmbeddingTable]) -> Result<EmbeddingTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::InvalidInput("concat_tables needs at least one table".into()))?;
    let reference = first.label_set();
    let mut sym_diff: BTreeSet<&str> = BTreeSet::new();
    for t in &tables[1..] {
        let other = t.label_set();
        sym_diff.extend(reference.symmetric_difference(&other).copied());
    }
    if !sym_diff.is_empty() {
        return Err(Error::LabelMismatch(
            sym_diff.into_iter().map(String::from).collect(),
        ));
    }
    let dim = tables.iter().map(|t| t.dim).sum();
    let variant = tables
        .iter()
        .map(|t| t.variant.as_str())
        .collect::<Vec<_>>()
        .join("+");
    let mut out = EmbeddingTable::new(dim, variant);
    for label in &first.labels {
        let mut v = Vec::with_capacity(dim);
        for t in tables {
            v.extend_from_slice(t.require(label)?);
        }
        out.push(label.clone(), v)?;
    }
    Ok(out)
}

/// One entry per class: the mean of the vectors of its synonymous names.
pub fn average_synonyms(
    table: &EmbeddingTable,
    synsets: &IndexMap<String, Vec<String>>,
) -> Result<EmbeddingTable> {
    let mut out = EmbeddingTable::new(table.dim, table.variant.clone());
    for (class, names) in synsets {
        if names.is_empty() {
            return Err(Error::InvalidInput(format!(
                "synset `{class}` has no names"
            )));
        }
        let mut acc = vec![0.0f64; table.dim];
        for name in names {
            for (a, v) in acc.iter_mut().zip(table.require(name)?) {
                *a += v;
            }
        }
        let n = names.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        out.push(class.clone(), acc)?;
    }
    Ok(out)
}
