//! `EMB1` embedding files: a 16-byte header (`b"EMB1"`, `u32` dimension,
//! `u64` row count, all little-endian) followed by `count * dimension`
//! little-endian `f32` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::embedding::Embedding;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const HEADER_LEN: u64 = 16;

/// Row-major block of embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        EmbeddingMatrix {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Embedding>,
    {
        let mut m = EmbeddingMatrix::new(dim);
        for r in rows {
            m.push(r)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, e: &Embedding) -> Result<usize> {
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: e.dim(),
            });
        }
        self.data.extend_from_slice(e.as_slice());
        Ok(self.len() - 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row `i` as an [`Embedding`]; rows must be unit-norm.
    pub fn embedding(&self, i: usize) -> Result<Embedding> {
        if i >= self.len() {
            return Err(Error::EmbeddingFile(format!(
                "row {i} out of bounds ({} rows)",
                self.len()
            )));
        }
        Embedding::from_unit(self.row(i).to_vec())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Parses a complete file image, validating magic and total length.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN as usize {
            return Err(Error::EmbeddingFile(format!(
                "truncated header ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::EmbeddingFile("bad magic, expected EMB1".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        if dim == 0 {
            return Err(Error::EmbeddingFile("zero dimension".into()));
        }
        let expected = (count as u128) * (dim as u128) * 4 + HEADER_LEN as u128;
        if expected != bytes.len() as u128 {
            return Err(Error::EmbeddingFile(format!(
                "size mismatch: header implies {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        let data = bytes[HEADER_LEN as usize..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
