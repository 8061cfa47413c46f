use std::path::Path;

use super::{MemoryBank, Precision, Provenance};
use crate::atomic::write_atomic;
use crate::error::{Error, Result};

pub const BANK_MAGIC: &[u8; 8] = b"CPMFBANK";
pub const BANK_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 4 + 8;

/// Serializes the bank: magic, version, dim, row count, f32 rows, a
/// `(cloud u32, point u32)` provenance entry per row, and the f64 coreset ratio.
pub fn encode_bank(bank: &MemoryBank) -> Vec<u8> {
    let rows = bank.len();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * (bank.dim() * 4 + 8) + 8);
    out.extend_from_slice(BANK_MAGIC);
    out.extend_from_slice(&BANK_VERSION.to_le_bytes());
    out.extend_from_slice(&(bank.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    for &v in bank.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for p in bank.provenance() {
        out.extend_from_slice(&p.cloud.to_le_bytes());
        out.extend_from_slice(&p.point.to_le_bytes());
    }
    out.extend_from_slice(&bank.coreset_ratio().to_le_bytes());
    out
}

/// Parses a bank; when `expected_dim` is given the stored width must match it.
pub fn decode_bank(bytes: &[u8], expected_dim: Option<usize>) -> Result<MemoryBank> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != BANK_MAGIC {
        return Err(Error::Corrupt("bank file does not start with CPMFBANK".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != BANK_VERSION {
        return Err(Error::Corrupt(format!(
            "bank version {version} is not supported (expected {BANK_VERSION})"
        )));
    }
    let dim = u32_at(12) as usize;
    let rows = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if dim == 0 {
        return Err(Error::Corrupt("bank dimension is zero".into()));
    }
    if let Some(e) = expected_dim {
        if e != dim {
            return Err(Error::DimensionMismatch {
                expected: e,
                found: dim,
            });
        }
    }
    let expected_len = usize::try_from(rows)
        .ok()
        .and_then(|r| r.checked_mul(dim * 4 + 8))
        .and_then(|b| b.checked_add(HEADER_LEN + 8))
        .ok_or_else(|| Error::Corrupt(format!("bank row count {rows} is implausible")))?;
    if bytes.len() != expected_len {
        return Err(Error::Corrupt(format!(
            "bank payload is {} bytes, header implies {expected_len}",
            bytes.len()
        )));
    }
    let rows = rows as usize;
    let mut o = HEADER_LEN;
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows * dim {
        let v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Corrupt(format!("bank entry {} is not finite", data.len())));
        }
        data.push(v as f64);
        o += 4;
    }
    let mut provenance = Vec::with_capacity(rows);
    for _ in 0..rows {
        provenance.push(Provenance {
            cloud: u32_at(o),
            point: u32_at(o + 4),
        });
        o += 8;
    }
    let ratio = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Corrupt(format!("bank coreset ratio {ratio} is outside (0, 1]")));
    }
    MemoryBank::from_parts(dim, data, provenance, ratio, Precision::F32)
}

pub fn save_bank(bank: &MemoryBank, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_bank(bank))
}

pub fn load_bank(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<MemoryBank> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bank(&bytes, expected_dim)
}
