use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A raw IDX file: big-endian magic, big-endian `u32` dimensions, and an
/// unsigned-byte payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

/// Decoded contents of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum Idx {
    /// `[count × 1 × rows × cols]`, bytes scaled by `1/255`.
    Images(Tensor),
    Labels(Vec<u8>),
}

impl IdxFile {
    pub fn parse(bytes: &[u8]) -> Result<IdxFile> {
        let header = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
                .ok_or(Error::Length {
                    expected: at + 4,
                    found: bytes.len(),
                })
        };
        let magic = header(0)?;
        let rank = match magic {
            IMAGES_MAGIC => 3,
            LABELS_MAGIC => 1,
            found => {
                return Err(Error::Magic {
                    found,
                    expected: "0x00000803 (images) or 0x00000801 (labels)",
                })
            }
        };
        let dims = (0..rank).map(|i| header(4 + 4 * i)).collect::<Result<Vec<_>>>()?;
        let start = 4 + 4 * rank;
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_add(start))
            .ok_or_else(|| Error::Format(format!("IDX dimensions {dims:?} overflow")))?;
        if bytes.len() < expected {
            return Err(Error::Length {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after the IDX payload",
                bytes.len() - expected
            )));
        }
        Ok(IdxFile {
            magic,
            dims,
            payload: bytes[start..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.payload.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(&self) -> Result<Idx> {
        match self.magic {
            IMAGES_MAGIC => {
                let d: Vec<usize> = self.dims.iter().map(|&d| d as usize).collect();
                let data = self.payload.iter().map(|&b| f64::from(b) / 255.0).collect();
                Ok(Idx::Images(Tensor::new(vec![d[0], 1, d[1], d[2]], data)?))
            }
            _ => Ok(Idx::Labels(self.payload.clone())),
        }
    }
}

/// Parses IDX bytes into scaled images or raw labels.
pub fn parse_idx(bytes: &[u8]) -> Result<Idx> {
    IdxFile::parse(bytes)?.decode()
}

/// Reads an IDX file, transparently gunzipping `.gz` content.
pub fn read_idx(path: impl AsRef<Path>) -> Result<Idx> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        parse_idx(&out)
    } else {
        parse_idx(&raw)
    }
}
