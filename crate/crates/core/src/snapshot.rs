//! Binary field snapshots.
//!
//! Layout (little-endian): a 32-byte header
//!
//! | offset | type  | content                    |
//! |--------|-------|----------------------------|
//! | 0      | [u8;4]| magic `HMHD`               |
//! | 4      | u32   | format version (1)         |
//! | 8      | u32   | grid size `M`              |
//! | 12     | u32   | rank (1 scalar, 3 vector)  |
//! | 16     | f64   | period length `L`          |
//! | 24     | u64   | reserved, zero             |
//!
//! followed by `M³·rank` f64 samples in row-major order `(i, j, k, component)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{GridField, Rank, TorusDomain};

pub const MAGIC: [u8; 4] = *b"HMHD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn encode(field: &GridField) -> Vec<u8> {
    let d = field.domain();
    let rank = field.rank().components() as u32;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.data().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(d.grid_size as u32).to_le_bytes());
    out.extend_from_slice(&rank.to_le_bytes());
    out.extend_from_slice(&d.period_length.to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<GridField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let m = u32_at(8) as usize;
    let rank = match u32_at(12) {
        1 => Rank::Scalar,
        3 => Rank::Vector3,
        r => return Err(Error::Format(format!("unsupported rank {r}"))),
    };
    let l = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let domain = TorusDomain::new(l, m).map_err(|e| Error::Format(e.to_string()))?;
    let n = m * m * m * rank.components();
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * n {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", 8 * n, body.len())));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GridField::from_data(domain, rank, data)
}

pub fn write_snapshot(path: &Path, field: &GridField) -> Result<()> {
    fs::write(path, encode(field))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<GridField> {
    decode(&fs::read(path)?)
}
