//! Named weight store and its portable binary file format.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "FWGN" | version | tensor_count
//! per tensor:
//!   name_len | name (UTF-8) | dtype (0 = f32) | rank | dims[rank]
//!   has_mask (0 or 1)
//!   [block_rows | block_cols | mask bits, LSB first, ceil(blocks / 8) bytes]
//!   payload: f32 LE, rows*cols values (dense) or kept_blocks*block_len (masked)
//! crc32 of every preceding byte
//! ```
//!
//! See `docs/weights-format.md` for the full description.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{BlockShape, BlockSparseMatrix, DenseMatrix, Matrix};

pub const MAGIC: [u8; 4] = *b"FWGN";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;

/// Matrices keyed by name. Iteration order (and therefore file order) is
/// lexicographic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelWeights {
    tensors: BTreeMap<String, Matrix>,
}

impl ModelWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: impl Into<Matrix>) -> Option<Matrix> {
        self.tensors.insert(name.into(), m.into())
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Matrix> {
        self.get(name).ok_or_else(|| Error::UnknownTensor(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_params(&self) -> usize {
        self.tensors.values().map(Matrix::total_params).sum()
    }

    pub fn active_params(&self) -> usize {
        self.tensors.values().map(Matrix::active_params).sum()
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, vals: &[f32]) {
        for v in vals {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Malformed(format!("{what} {v} does not fit in 32 bits")))
}

/// Serializes weights to the interchange format.
pub fn encode(weights: &ModelWeights) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.u32(to_u32(weights.len(), "tensor count")?);
    for (name, m) in weights.iter() {
        w.u32(to_u32(name.len(), "name length")?);
        w.0.extend_from_slice(name.as_bytes());
        w.u32(DTYPE_F32);
        w.u32(2);
        w.u32(to_u32(m.rows(), "rows")?);
        w.u32(to_u32(m.cols(), "cols")?);
        match m {
            Matrix::Dense(d) => {
                w.u32(0);
                w.f32s(d.data());
            }
            Matrix::Sparse(s) => {
                w.u32(1);
                let b = s.block_shape();
                w.u32(to_u32(b.rows, "block rows")?);
                w.u32(to_u32(b.cols, "block cols")?);
                let mut bits = vec![0u8; s.mask().len().div_ceil(8)];
                for (i, _) in s.mask().iter().enumerate().filter(|(_, &m)| m) {
                    bits[i / 8] |= 1 << (i % 8);
                }
                w.0.extend_from_slice(&bits);
                w.f32s(s.values());
            }
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    Ok(w.0)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::UnexpectedEof)?;
        if end > self.bytes.len() {
            return Err(Error::UnexpectedEof);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or(Error::UnexpectedEof)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

struct RawTensor {
    name: String,
    rows: usize,
    cols: usize,
    mask: Option<(BlockShape, Vec<bool>)>,
    payload: Vec<f32>,
}

/// Parses and validates the interchange format.
pub fn decode(bytes: &[u8]) -> Result<ModelWeights> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut raws = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = r.u32()?;
        if dtype != DTYPE_F32 {
            return Err(Error::Malformed(format!("{name}: unsupported dtype code {dtype}")));
        }
        let rank = r.u32()?;
        if rank != 2 {
            return Err(Error::Shape {
                tensor: name,
                expected: "rank 2".into(),
                actual: format!("rank {rank}"),
            });
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let has_mask = r.u32()?;
        let (mask, values) = match has_mask {
            0 => (None, rows.checked_mul(cols).ok_or(Error::UnexpectedEof)?),
            1 => {
                let block = BlockShape::new(r.u32()? as usize, r.u32()? as usize);
                if block.is_empty() || rows % block.rows != 0 || cols % block.cols != 0 {
                    return Err(Error::Shape {
                        tensor: name,
                        expected: format!("dims divisible by block {}x{}", block.rows, block.cols),
                        actual: format!("{rows}x{cols}"),
                    });
                }
                let nblocks = (rows / block.rows) * (cols / block.cols);
                let bits = r.take(nblocks.div_ceil(8))?;
                let mask: Vec<bool> = (0..nblocks).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
                let kept = mask.iter().filter(|&&m| m).count();
                (Some((block, mask)), kept * block.len())
            }
            other => return Err(Error::Malformed(format!("{name}: mask flag {other}"))),
        };
        let payload = r.f32s(values)?;
        raws.push(RawTensor {
            name,
            rows,
            cols,
            mask,
            payload,
        });
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut weights = ModelWeights::new();
    for t in raws {
        let m: Matrix = match t.mask {
            None => DenseMatrix::new(t.rows, t.cols, t.payload)?.into(),
            Some((block, mask)) => BlockSparseMatrix::new(t.rows, t.cols, block, mask, t.payload)?.into(),
        };
        if weights.insert(t.name.clone(), m).is_some() {
            return Err(Error::Malformed(format!("duplicate tensor name {:?}", t.name)));
        }
    }
    Ok(weights)
}

/// Audits the weights as a generator model, then writes them.
pub fn save_model(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    let cfg = crate::generator::GeneratorConfig::infer(weights)?;
    crate::generator::audit_shapes(weights, &cfg)?;
    std::fs::write(path, encode(weights)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelWeights> {
    decode(&std::fs::read(path)?)
}
