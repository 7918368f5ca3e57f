//! On-disk flat index: a fixed little-endian header, the f32 matrix, then
//! the id table.
//!
//! ```text
//! magic      8  b"SVBFLAT\0"
//! version    4  u32 = 1
//! dim        4  u32
//! count      8  u64
//! built_at   8  u64 (unix seconds)
//! source     32 sha256 of the training subset
//! checksum   32 sha256 of everything after the header
//! matrix     count * dim * 4  f32
//! ids        per entry: 0u8 + i64, or 1u8 + u32 length + UTF-8 bytes
//! ```

use std::fs;
use std::io;
use std::path::Path;

use sevbench_core::{FlatIndex, IndexError, IndexMetadata, RecordId};
use thiserror::Error;

use crate::hashing::sha256;

pub const MAGIC: &[u8; 8] = b"SVBFLAT\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 32 + 32;

#[derive(Debug, Error)]
pub enum IndexFileError {
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
    #[error("index dimension {found} does not match the expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn corrupt(reason: impl Into<String>) -> IndexFileError {
    IndexFileError::CorruptIndex(reason.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexHeader {
    pub version: u32,
    pub dim: usize,
    pub count: usize,
    pub metadata: IndexMetadata,
    pub checksum: [u8; 32],
}

pub fn encode(index: &FlatIndex) -> Vec<u8> {
    let mut body = Vec::with_capacity(index.matrix().len() * 4 + index.len() * 9);
    for v in index.matrix() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    for id in index.ids() {
        match id {
            RecordId::Int(v) => {
                body.push(0);
                body.extend_from_slice(&v.to_le_bytes());
            }
            RecordId::Str(s) => {
                body.push(1);
                body.extend_from_slice(&(s.len() as u32).to_le_bytes());
                body.extend_from_slice(s.as_bytes());
            }
        }
    }
    let meta = index.metadata();
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(index.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta.built_at.to_le_bytes());
    out.extend_from_slice(&meta.source_hash);
    out.extend_from_slice(&sha256(&body));
    out.extend_from_slice(&body);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("file is truncated"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], IndexFileError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<IndexHeader, IndexFileError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(r.array()?) as usize;
    let count = u64::from_le_bytes(r.array()?) as usize;
    let built_at = u64::from_le_bytes(r.array()?);
    let source_hash = r.array()?;
    let checksum = r.array()?;
    Ok(IndexHeader {
        version,
        dim,
        count,
        metadata: IndexMetadata {
            built_at,
            source_hash,
        },
        checksum,
    })
}

pub fn decode(bytes: &[u8]) -> Result<FlatIndex, IndexFileError> {
    let header = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if sha256(body) != header.checksum {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    let cells = header
        .dim
        .checked_mul(header.count)
        .ok_or_else(|| corrupt("header sizes overflow"))?;
    let matrix: Vec<f32> = r
        .take(cells.checked_mul(4).ok_or_else(|| corrupt("header sizes overflow"))?)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let mut ids = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let id = match r.take(1)?[0] {
            0 => RecordId::Int(i64::from_le_bytes(r.array()?)),
            1 => {
                let len = u32::from_le_bytes(r.array()?) as usize;
                let text = std::str::from_utf8(r.take(len)?)
                    .map_err(|_| corrupt("id is not UTF-8"))?;
                RecordId::Str(text.to_string())
            }
            tag => return Err(corrupt(format!("unknown id tag {tag}"))),
        };
        ids.push(id);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after id table"));
    }
    if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
        return Err(corrupt(format!("non-finite value at matrix cell {pos}")));
    }
    Ok(FlatIndex::from_parts(header.dim, ids, matrix, header.metadata)?)
}

pub fn save(index: &FlatIndex, path: &Path) -> io::Result<()> {
    fs::write(path, encode(index))
}

pub fn load(path: &Path) -> Result<FlatIndex, IndexFileError> {
    decode(&fs::read(path)?)
}

/// Loads and checks the stored dimension against `expected`.
pub fn load_expecting(path: &Path, expected: usize) -> Result<FlatIndex, IndexFileError> {
    let bytes = fs::read(path)?;
    let header = decode_header(&bytes)?;
    if header.dim != expected {
        return Err(IndexFileError::DimensionMismatch {
            expected,
            found: header.dim,
        });
    }
    decode(&bytes)
}

/// Header-only read for the `index --stats` surface.
pub fn stats(path: &Path) -> Result<IndexHeader, IndexFileError> {
    let bytes = fs::read(path)?;
    decode_header(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sevbench_core::EmbeddingVector;

    fn three() -> FlatIndex {
        FlatIndex::build(
            [
                (RecordId::Int(1), EmbeddingVector::new(vec![0.1, -2.5, 3.0]).unwrap()),
                (RecordId::Str("b".into()), EmbeddingVector::new(vec![f32::MIN_POSITIVE, 0.0, -0.0]).unwrap()),
                (RecordId::Int(-7), EmbeddingVector::new(vec![1e30, 7.0, 1.0 / 3.0]).unwrap()),
            ],
            IndexMetadata {
                built_at: 1_700_000_000,
                source_hash: [9; 32],
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let index = three();
        let decoded = decode(&encode(&index)).unwrap();
        assert_eq!(decoded.ids(), index.ids());
        assert_eq!(decoded.metadata(), index.metadata());
        let bits = |i: &FlatIndex| i.matrix().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&decoded), bits(&index));
    }

    #[test]
    fn truncation_and_tampering_are_detected() {
        let bytes = encode(&three());
        for cut in [0, 5, HEADER_LEN - 1, HEADER_LEN + 3, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(IndexFileError::CorruptIndex(_))),
                "cut at {cut}"
            );
        }
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(decode(&flipped), Err(IndexFileError::CorruptIndex(_))));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(IndexFileError::CorruptIndex(_))));
    }

    #[test]
    fn expected_dimension_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.idx");
        save(&three(), &path).unwrap();
        assert_eq!(stats(&path).unwrap().count, 3);
        assert!(load_expecting(&path, 3).is_ok());
        assert!(matches!(
            load_expecting(&path, 768),
            Err(IndexFileError::DimensionMismatch { expected: 768, found: 3 })
        ));
    }
}
