//! `FINEEMB1` binary embedding files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   8 bytes  "FINEEMB1"
//! dim     u32
//! count   u64
//! data    count * dim f32, row-major
//! ids     count UTF-8 strings, each terminated by '\n'
//! [flag]  u8, index files only: 1 if rows are L2-normalized
//! ```

use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"FINEEMB1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 8]),
    #[error("id {0:?} contains a newline")]
    NewlineInId(String),
    #[error("id section is not valid UTF-8")]
    InvalidId,
    #[error("file ends before {0}")]
    Truncated(&'static str),
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub ids: Vec<String>,
    /// Row-major `ids.len() × dim`.
    pub data: Vec<f32>,
}

impl EmbeddingFile {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self, FormatError> {
        if data.len() != ids.len() * dim {
            return Err(FormatError::Shape(format!(
                "{} floats for {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        Ok(Self { dim, ids, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.data.chunks(self.dim.max(1)))
    }
}

pub fn write_embeddings<W: Write>(
    mut w: W,
    file: &EmbeddingFile,
    normalized_flag: Option<bool>,
) -> Result<(), FormatError> {
    if let Some(bad) = file.ids.iter().find(|id| id.contains('\n')) {
        return Err(FormatError::NewlineInId(bad.clone()));
    }
    let dim = u32::try_from(file.dim).map_err(|_| FormatError::Shape("dim exceeds u32".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&(file.ids.len() as u64).to_le_bytes())?;
    for v in &file.data {
        w.write_all(&v.to_le_bytes())?;
    }
    for id in &file.ids {
        w.write_all(id.as_bytes())?;
        w.write_all(b"\n")?;
    }
    if let Some(flag) = normalized_flag {
        w.write_all(&[u8::from(flag)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), FormatError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::Truncated(what),
        _ => FormatError::Io(e),
    })
}

/// Reads the body and, when `expect_flag` is set, the trailing flag byte.
pub fn read_embeddings<R: BufRead>(
    mut r: R,
    expect_flag: bool,
) -> Result<(EmbeddingFile, Option<bool>), FormatError> {
    let mut magic = [0u8; 8];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let mut dim = [0u8; 4];
    read_exact_or(&mut r, &mut dim, "dim")?;
    let dim = u32::from_le_bytes(dim) as usize;
    let mut count = [0u8; 8];
    read_exact_or(&mut r, &mut count, "count")?;
    let count = usize::try_from(u64::from_le_bytes(count))
        .map_err(|_| FormatError::Shape("count exceeds usize".into()))?;

    let floats = count
        .checked_mul(dim)
        .ok_or_else(|| FormatError::Shape("count * dim overflows".into()))?;
    let mut raw = vec![0u8; floats * 4];
    read_exact_or(&mut r, &mut raw, "vector data")?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let mut ids = Vec::with_capacity(count);
    let mut line = Vec::new();
    for _ in 0..count {
        line.clear();
        r.read_until(b'\n', &mut line)?;
        if line.pop() != Some(b'\n') {
            return Err(FormatError::Truncated("ids"));
        }
        ids.push(String::from_utf8(line.clone()).map_err(|_| FormatError::InvalidId)?);
    }

    let flag = if expect_flag {
        let mut b = [0u8; 1];
        read_exact_or(&mut r, &mut b, "normalization flag")?;
        Some(b[0] != 0)
    } else {
        None
    };
    Ok((EmbeddingFile { dim, ids, data }, flag))
}
