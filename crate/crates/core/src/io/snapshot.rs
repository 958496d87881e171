//! GRWD snapshot files.
//!
//! Layout (little-endian): a 64-byte header followed by the row-major
//! density matrix as interleaved `(re, im)` f64 pairs.
//!
//! | offset | type | field |
//! |---|---|---|
//! | 0 | `[u8; 4]` | magic `GRWD` |
//! | 4 | u16 | format version |
//! | 6 | u16 | payload kind (1 = density matrix) |
//! | 8 | u32 | n_points |
//! | 12 | 4 bytes | reserved, zero |
//! | 16 | f64 | x_min |
//! | 24 | f64 | x_max |
//! | 32 | f64 | time |
//! | 40 | 24 bytes | zero padding |

use std::path::Path;

use crate::error::{Error, Result};
use crate::master::DensityField;
use crate::numerics::{ComplexMatrix, GridSpec, C64};

pub const MAGIC: [u8; 4] = *b"GRWD";
pub const FORMAT_VERSION: u16 = 1;
pub const KIND_DENSITY: u16 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldFileHeader {
    pub version: u16,
    pub kind: u16,
    pub n_points: u32,
    pub x_min: f64,
    pub x_max: f64,
    pub time: f64,
}

impl FieldFileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&self.kind.to_le_bytes());
        b[8..12].copy_from_slice(&self.n_points.to_le_bytes());
        b[16..24].copy_from_slice(&self.x_min.to_le_bytes());
        b[24..32].copy_from_slice(&self.x_max.to_le_bytes());
        b[32..40].copy_from_slice(&self.time.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 4 || b[0..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if b.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: b.len(),
            });
        }
        let u16_at = |o: usize| u16::from_le_bytes([b[o], b[o + 1]]);
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let kind = u16_at(6);
        if kind != KIND_DENSITY {
            return Err(Error::PayloadKind(kind));
        }
        Ok(Self {
            version,
            kind,
            n_points: u32::from_le_bytes(b[8..12].try_into().expect("4 bytes")),
            x_min: f64_at(16),
            x_max: f64_at(24),
            time: f64_at(32),
        })
    }

    /// Total file size implied by the header.
    pub fn file_len(&self) -> usize {
        HEADER_LEN + 16 * (self.n_points as usize).pow(2)
    }
}

pub fn encode_density(field: &DensityField) -> Vec<u8> {
    let g = field.grid();
    let header = FieldFileHeader {
        version: FORMAT_VERSION,
        kind: KIND_DENSITY,
        n_points: g.n_points() as u32,
        x_min: g.x_min(),
        x_max: g.x_max(),
        time: field.time(),
    };
    let mut out = Vec::with_capacity(header.file_len());
    out.extend_from_slice(&header.to_bytes());
    for z in field.rho().iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

/// Decodes a snapshot. The matrix is taken as stored; call
/// [`DensityField::validate`] to check physical invariants.
pub fn decode_density(bytes: &[u8]) -> Result<DensityField> {
    let header = FieldFileHeader::from_bytes(bytes)?;
    let expected = header.file_len();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let n = header.n_points as usize;
    let grid = GridSpec::new(n, header.x_min, header.x_max)?;
    let entries: Vec<C64> = bytes[HEADER_LEN..expected]
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    DensityField::new(grid, ComplexMatrix::from_row_major(n, n, entries)?, header.time)
}

pub fn write_density(field: &DensityField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_density(field)).map_err(|e| Error::io(path, e))
}

pub fn read_density(path: impl AsRef<Path>) -> Result<DensityField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_density(&bytes)
}
