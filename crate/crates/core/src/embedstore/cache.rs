//! The binary embedding cache.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "RPKG" | version u16 = 1 | kind u8 (0 image, 1 prompt) | dim u32 | count u64
//! count x [ class_id u32 | prompt_j u32 (0xFFFFFFFF for images) | dim x f32 ]
//! crc32 u32 over the record bytes
//! ```

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RPKG";
pub const VERSION: u16 = 1;
pub const IMAGE_SENTINEL: u32 = u32::MAX;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8;
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheKind {
    Image,
    Prompt,
}

impl CacheKind {
    fn code(self) -> u8 {
        match self {
            CacheKind::Image => 0,
            CacheKind::Prompt => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(CacheKind::Image),
            1 => Ok(CacheKind::Prompt),
            other => Err(Error::format(format!("unknown cache kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    pub dim: usize,
    pub kind: CacheKind,
    /// Row-major `count x dim`.
    pub vectors: Vec<f32>,
    pub labels: Vec<u32>,
    /// Position of each prompt within its class; [`IMAGE_SENTINEL`] for images.
    pub prompt_index: Vec<u32>,
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

impl EmbeddingCache {
    /// Builds a cache from raw rows, L2-normalizing each one.
    pub fn from_raw(
        kind: CacheKind,
        dim: usize,
        raw: &[f64],
        labels: Vec<u32>,
        prompt_index: Vec<u32>,
    ) -> Result<Self> {
        if dim == 0 || raw.len() != dim * labels.len() {
            return Err(Error::validation(format!(
                "{} values cannot form {} rows of dim {dim}",
                raw.len(),
                labels.len()
            )));
        }
        let mut vectors = Vec::with_capacity(raw.len());
        for (r, row) in raw.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::validation(format!(
                    "row {r} cannot be normalized (norm {norm})"
                )));
            }
            vectors.extend(row.iter().map(|x| (x / norm) as f32));
        }
        let cache = EmbeddingCache {
            dim,
            kind,
            vectors,
            labels,
            prompt_index,
        };
        cache.validate()?;
        Ok(cache)
    }

    pub fn images(dim: usize, raw: &[f64], labels: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        Self::from_raw(CacheKind::Image, dim, raw, labels, vec![IMAGE_SENTINEL; n])
    }

    pub fn prompts(
        dim: usize,
        raw: &[f64],
        labels: Vec<u32>,
        prompt_index: Vec<u32>,
    ) -> Result<Self> {
        Self::from_raw(CacheKind::Prompt, dim, raw, labels, prompt_index)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of classes implied by the labels (max label + 1).
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.dim == 0 {
            return Err(Error::validation("dim must be positive"));
        }
        if self.vectors.len() != n * self.dim || self.prompt_index.len() != n {
            return Err(Error::validation("cache arrays have inconsistent lengths"));
        }
        for i in 0..n {
            let norm = l2_norm(self.row(i));
            if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::validation(format!(
                    "vector {i} has norm {norm}, expected 1"
                )));
            }
        }
        match self.kind {
            CacheKind::Image => {
                if let Some(i) = self.prompt_index.iter().position(|&j| j != IMAGE_SENTINEL) {
                    return Err(Error::validation(format!(
                        "image record {i} carries a prompt index"
                    )));
                }
            }
            CacheKind::Prompt => {
                let mut per_class: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
                for (&c, &j) in self.labels.iter().zip(&self.prompt_index) {
                    per_class.entry(c).or_default().push(j);
                }
                for (c, mut js) in per_class {
                    js.sort_unstable();
                    if js.iter().enumerate().any(|(pos, &j)| j as usize != pos) {
                        return Err(Error::validation(format!(
                            "class {c} prompt indices are not a permutation of 0..{}",
                            js.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Writes `cache` in the binary format and returns the number of bytes
/// emitted.
pub fn write_cache<W: Write>(cache: &EmbeddingCache, mut sink: W) -> Result<u64> {
    cache.validate()?;
    if cache.dim > MAX_DIM {
        return Err(Error::validation(format!(
            "dim {} exceeds {MAX_DIM}",
            cache.dim
        )));
    }
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&MAGIC);
    header.write_u16::<LittleEndian>(VERSION)?;
    header.write_u8(cache.kind.code())?;
    header.write_u32::<LittleEndian>(
        u32::try_from(cache.dim).map_err(|_| Error::validation("dim does not fit in u32"))?,
    )?;
    header.write_u64::<LittleEndian>(cache.len() as u64)?;
    sink.write_all(&header)?;

    let mut crc = crc32fast::Hasher::new();
    let mut record = Vec::with_capacity(8 + 4 * cache.dim);
    for i in 0..cache.len() {
        record.clear();
        record.write_u32::<LittleEndian>(cache.labels[i])?;
        record.write_u32::<LittleEndian>(cache.prompt_index[i])?;
        for &x in cache.row(i) {
            record.write_f32::<LittleEndian>(x)?;
        }
        crc.update(&record);
        sink.write_all(&record)?;
    }
    sink.write_u32::<LittleEndian>(crc.finalize())?;
    sink.flush()?;
    Ok((HEADER_LEN + cache.len() * record_len(cache.dim) + 4) as u64)
}

/// Largest dimensionality a reader accepts, so a corrupt header cannot
/// trigger a huge record buffer.
pub const MAX_DIM: usize = 1 << 16;

fn record_len(dim: usize) -> usize {
    8 + 4 * dim
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::format("cache file is truncated")
    } else {
        Error::Io(e)
    }
}

pub fn read_cache<R: Read>(mut source: R) -> Result<EmbeddingCache> {
    let mut magic = [0u8; 4];
    source.read_exact(&mut magic).map_err(truncated)?;
    if magic != MAGIC {
        return Err(Error::format("bad magic, not an embedding cache"));
    }
    let version = source.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported cache version {version}"
        )));
    }
    let kind = CacheKind::from_code(source.read_u8().map_err(truncated)?)?;
    let dim = source.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let count = source.read_u64::<LittleEndian>().map_err(truncated)?;
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::format(format!(
            "cache header has implausible dim {dim}"
        )));
    }
    let count = usize::try_from(count).map_err(|_| Error::format("record count overflows"))?;

    let mut crc = crc32fast::Hasher::new();
    let mut record = vec![0u8; record_len(dim)];
    let mut labels = Vec::new();
    let mut prompt_index = Vec::new();
    let mut vectors = Vec::new();
    for _ in 0..count {
        source.read_exact(&mut record).map_err(truncated)?;
        crc.update(&record);
        let mut r = record.as_slice();
        labels.push(r.read_u32::<LittleEndian>()?);
        prompt_index.push(r.read_u32::<LittleEndian>()?);
        for _ in 0..dim {
            vectors.push(r.read_f32::<LittleEndian>()?);
        }
    }
    let stored = source.read_u32::<LittleEndian>().map_err(truncated)?;
    if stored != crc.finalize() {
        return Err(Error::format("payload checksum mismatch"));
    }
    let mut trailing = [0u8; 1];
    if source.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after checksum"));
    }
    let cache = EmbeddingCache {
        dim,
        kind,
        vectors,
        labels,
        prompt_index,
    };
    cache.validate()?;
    Ok(cache)
}
