//! Nearest class names by cosine similarity, in the raw embedding space or
//! after projection through `A`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;

use crate::cem::ProjectionPair;
use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scoring::cosine;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub class: String,
    pub cosine: f64,
}

/// The `k` classes most similar to `target`, excluding `target` itself.
/// Similarities are descending; ties are ordered by class name.
pub fn nearest_classes(
    table: &EmbeddingTable,
    target: &str,
    k: usize,
    pair: Option<&ProjectionPair<f64>>,
) -> Result<Vec<Neighbor>> {
    if !table.contains(target) {
        return Err(Error::MissingLabel(target.to_owned()));
    }
    if k == 0 || k >= table.len() {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..{}, got {k}",
            table.len()
        )));
    }
    let view = |v: &[f64]| -> Result<Vec<f64>> {
        match pair {
            Some(p) => p.project_text(v),
            None => Ok(v.to_vec()),
        }
    };
    let anchor = view(table.require(target)?)?;
    let mut ranked = Vec::with_capacity(table.len() - 1);
    for (label, v) in table.iter().filter(|(l, _)| *l != target) {
        ranked.push(Neighbor {
            class: label.to_owned(),
            cosine: cosine(&anchor, &view(v)?),
        });
    }
    ranked.sort_by(|a, b| {
        b.cosine
            .partial_cmp(&a.cosine)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.class.cmp(&b.class))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Fixed-width text table with a rank column.
pub fn format_table(neighbors: &[Neighbor]) -> String {
    let width = neighbors
        .iter()
        .map(|n| n.class.chars().count())
        .max()
        .unwrap_or(0)
        .max(5);
    let mut out = format!("{:>4}  {:<width$}  {:>9}\n", "rank", "class", "cosine");
    for (i, n) in neighbors.iter().enumerate() {
        let _ = writeln!(out, "{:>4}  {:<width$}  {:>9.6}", i + 1, n.class, n.cosine);
    }
    out
}

/// CSV with header `rank,class,cosine`.
pub fn neighbors_csv(neighbors: &[Neighbor]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(format!("cannot encode neighbor table: {e}"));
    writer
        .write_record(["rank", "class", "cosine"])
        .map_err(err)?;
    for (i, n) in neighbors.iter().enumerate() {
        writer
            .write_record([(i + 1).to_string(), n.class.clone(), n.cosine.to_string()])
            .map_err(err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("cannot encode neighbor table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
