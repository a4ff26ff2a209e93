//! Binary vector (CMVEC) and matrix (CMMAT) files.
//!
//! CMVEC: `"CMV1"`, u32 LE record count, u32 LE dim, then per record a u16 LE
//! label length, the UTF-8 label bytes and `dim` f32 LE values.
//!
//! CMMAT: `"CMM1"`, u32 LE rows, u32 LE cols, `rows × cols` f32 LE values in
//! row-major order.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

use super::EmbeddingTable;

pub const CMVEC_MAGIC: &[u8; 4] = b"CMV1";
pub const CMMAT_MAGIC: &[u8; 4] = b"CMM1";

/// Byte cursor that reports the offset of any short read.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Format {
                offset: self.pos as u64,
                msg: format!(
                    "truncated file: need {n} bytes for {what}, {} remain",
                    self.bytes.len() - self.pos
                ),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(LittleEndian::read_u16(self.take(2, what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let start = self.pos;
        let raw = self.take(n * 4, what)?;
        let mut out = vec![0f32; n];
        LittleEndian::read_f32_into(raw, &mut out);
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format {
                offset: (start + 4 * i) as u64,
                msg: format!("non-finite value in {what}"),
            });
        }
        Ok(out)
    }

    fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::Format {
                offset: 0,
                msg: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

/// Raw CMVEC contents: declared dim plus records in file order.
#[derive(Debug, Clone)]
pub struct VectorRecords {
    pub dim: usize,
    pub records: Vec<(String, Vec<f32>)>,
}

pub fn decode_vectors(bytes: &[u8]) -> Result<VectorRecords> {
    let mut cur = Cursor::new(bytes);
    cur.expect_magic(CMVEC_MAGIC)?;
    let n = cur.u32("record count")? as usize;
    let dim = cur.u32("dimension")? as usize;
    let mut seen = HashSet::with_capacity(n);
    let mut records = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let record_start = cur.pos;
        let len = cur.u16("label length")? as usize;
        let label_start = cur.pos;
        let raw = cur.take(len, "label")?;
        let label = std::str::from_utf8(raw).map_err(|e| Error::Format {
            offset: (label_start + e.valid_up_to()) as u64,
            msg: "label is not valid UTF-8".into(),
        })?;
        if !seen.insert(label.to_owned()) {
            return Err(Error::Format {
                offset: record_start as u64,
                msg: format!("duplicate label `{label}`"),
            });
        }
        let values = cur.f32s(dim, "vector")?;
        records.push((label.to_owned(), values));
    }
    cur.finish()?;
    Ok(VectorRecords { dim, records })
}

pub fn encode_vectors<'a, I>(dim: usize, records: I) -> Result<Vec<u8>>
where
    I: ExactSizeIterator<Item = (&'a str, &'a [f32])>,
{
    let n = records.len();
    let mut out = Vec::with_capacity(12 + n * (2 + 16 + 4 * dim));
    out.extend_from_slice(CMVEC_MAGIC);
    push_u32(&mut out, n, "record count")?;
    push_u32(&mut out, dim, "dimension")?;
    for (label, values) in records {
        let len = u16::try_from(label.len()).map_err(|_| {
            Error::InvalidInput(format!("label longer than 65535 bytes: {label:.32}..."))
        })?;
        if values.len() != dim {
            return Err(Error::dims(
                format!("vector for `{label}`"),
                dim,
                values.len(),
            ));
        }
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(label.as_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn push_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes a CMVEC byte buffer into a table with the given variant tag.
pub fn decode_embeddings(bytes: &[u8], variant: &str) -> Result<EmbeddingTable> {
    let raw = decode_vectors(bytes)?;
    let mut table = EmbeddingTable::new(raw.dim, variant);
    for (label, values) in raw.records {
        table.push(label, values.iter().map(|&v| v as f64).collect())?;
    }
    Ok(table)
}

pub fn encode_embeddings(table: &EmbeddingTable) -> Result<Vec<u8>> {
    let rows: Vec<Vec<f32>> = table
        .iter()
        .map(|(_, v)| v.iter().map(|&x| x as f32).collect())
        .collect();
    encode_vectors(
        table.dim(),
        table
            .labels()
            .iter()
            .map(String::as_str)
            .zip(rows.iter().map(Vec::as_slice)),
    )
}

/// Loads a CMVEC file. The variant tag is the file stem.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let variant = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = read_bytes(path)?;
    decode_embeddings(&bytes, &variant).map_err(|e| with_path(e, path))
}

/// Writes a table as CMVEC; values are stored as 32-bit floats.
pub fn write_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(table)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_matrix<T: Real>(bytes: &[u8]) -> Result<Matrix<T>> {
    let mut cur = Cursor::new(bytes);
    cur.expect_magic(CMMAT_MAGIC)?;
    let rows = cur.u32("rows")? as usize;
    let cols = cur.u32("cols")? as usize;
    let count = rows.checked_mul(cols).ok_or_else(|| Error::Format {
        offset: 4,
        msg: "matrix size overflows".into(),
    })?;
    let values = cur.f32s(count, "matrix values")?;
    cur.finish()?;
    Matrix::new(
        rows,
        cols,
        values.into_iter().map(|v| T::of(v as f64)).collect(),
    )
}

pub fn encode_matrix<T: Real>(m: &Matrix<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * m.rows() * m.cols());
    out.extend_from_slice(CMMAT_MAGIC);
    push_u32(&mut out, m.rows(), "rows")?;
    push_u32(&mut out, m.cols(), "cols")?;
    for &v in m.as_slice() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn load_matrix<T: Real>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    decode_matrix(&bytes).map_err(|e| with_path(e, path))
}

pub fn write_matrix<T: Real>(m: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Format errors keep their offset; other errors gain the file path.
fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    }
}

/// Validated summary of a CMVEC or CMMAT file, dispatched on magic bytes.
#[derive(Debug, Clone, PartialEq)]
pub enum FileSummary {
    Vectors {
        count: usize,
        dim: usize,
        first_labels: Vec<String>,
    },
    Matrix {
        rows: usize,
        cols: usize,
    },
}

/// Fully decodes a binary file (never writes) and summarizes its header.
pub fn inspect_file(path: impl AsRef<Path>) -> Result<FileSummary> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let summary = match bytes.get(..4) {
        Some(m) if m == CMVEC_MAGIC => {
            let raw = decode_vectors(&bytes)?;
            FileSummary::Vectors {
                count: raw.records.len(),
                dim: raw.dim,
                first_labels: raw.records.iter().take(5).map(|(l, _)| l.clone()).collect(),
            }
        }
        Some(m) if m == CMMAT_MAGIC => {
            let m: Matrix<f64> = decode_matrix(&bytes)?;
            FileSummary::Matrix {
                rows: m.rows(),
                cols: m.cols(),
            }
        }
        Some(m) => {
            return Err(Error::Format {
                offset: 0,
                msg: format!(
                    "{}: unrecognized magic {:?}",
                    path.display(),
                    String::from_utf8_lossy(m)
                ),
            })
        }
        None => {
            return Err(Error::Format {
                offset: 0,
                msg: format!("{}: file shorter than 4 bytes", path.display()),
            })
        }
    };
    Ok(summary)
}
