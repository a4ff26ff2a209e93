use std::path::Path;

use serde::Serialize;

use crate::cem::{fit_classes, AlignmentConfig};
use crate::data::{DataBundle, Section};
use crate::error::{Error, Result};
use crate::scoring::Variant;

use super::eval::{evaluate, EvalConfig, EvalReport, TextAssets};

pub const SWEEP_HEADER: [&str; 4] = ["lambda", "d", "mean_accuracy", "ci95_half_width"];

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub lambda: f64,
    pub d: usize,
    pub report: EvalReport,
}

#[derive(Serialize)]
struct CsvRow {
    lambda: f64,
    d: usize,
    mean_accuracy: f64,
    ci95_half_width: f64,
}

/// s3 evaluation over every `(d, λ)` grid point. One projection pair is fitted
/// per `d` on `fit_section`; every cell reuses `eval.seed`, so all cells see
/// the same episodes.
pub fn sweep(
    bundle: &DataBundle,
    lambdas: &[f64],
    dims: &[usize],
    align: &AlignmentConfig,
    fit_section: Section,
    eval: &EvalConfig,
    threads: usize,
) -> Result<Vec<SweepCell>> {
    if lambdas.is_empty() || dims.is_empty() {
        return Err(Error::InvalidInput("sweep grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(lambdas.len() * dims.len());
    for &d in dims {
        let config = AlignmentConfig { dim: d, ..*align };
        let pair = fit_classes(
            &bundle.text,
            &bundle.store,
            bundle.split.section(fit_section),
            &config,
        )?;
        for &lambda in lambdas {
            let cell_config = EvalConfig {
                variant: Variant::S3,
                lambda,
                ..*eval
            };
            let report = evaluate(
                &cell_config,
                bundle,
                TextAssets {
                    pair: Some(&pair),
                    net: None,
                },
                threads,
            )?;
            cells.push(SweepCell { lambda, d, report });
        }
    }
    Ok(cells)
}

pub fn sweep_csv(cells: &[SweepCell]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for cell in cells {
        writer
            .serialize(CsvRow {
                lambda: cell.lambda,
                d: cell.d,
                mean_accuracy: cell.report.mean_accuracy,
                ci95_half_width: cell.report.ci95_half_width,
            })
            .map_err(|e| Error::InvalidInput(format!("cannot encode sweep row: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("cannot encode sweep table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_sweep_csv(cells: &[SweepCell], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, sweep_csv(cells)?).map_err(|e| Error::io(path, e))
}

/// The cell with the highest mean accuracy; ties go to the earliest cell.
pub fn best_cell(cells: &[SweepCell]) -> Option<&SweepCell> {
    cells
        .iter()
        .fold(None, |best: Option<&SweepCell>, c| match best {
            Some(b) if c.report.mean_accuracy <= b.report.mean_accuracy => Some(b),
            _ => Some(c),
        })
}
