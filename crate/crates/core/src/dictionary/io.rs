//! Binary dictionary files.
//!
//! Layout (little-endian): the 8-byte magic `SL0SRDIC`, u32 version, u32
//! scale, lr_patch_size, hr_patch_size and atom_count, then `d_low` and
//! `d_high` as column-major f64, then a CRC32 of all preceding bytes.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::CoupledDictionary;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SL0SRDIC";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 5 * 4;

pub fn encode_dictionary(dict: &CoupledDictionary) -> Result<Vec<u8>> {
    dict.check()?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (dict.d_low.len() + dict.d_high.len()) + 4);
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        dict.scale as u32,
        dict.lr_patch_size as u32,
        dict.hr_patch_size as u32,
        dict.atom_count() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in dict.d_low.iter().chain(dict.d_high.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses and validates; format errors name the offending field.
pub fn decode_dictionary(bytes: &[u8]) -> Result<CoupledDictionary> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::format("magic", "not a dictionary file"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("header", format!("truncated: {} bytes", bytes.len())));
    }
    let version = read_u32(bytes, 8);
    if version != VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let scale = read_u32(bytes, 12) as usize;
    let lr = read_u32(bytes, 16) as usize;
    let hr = read_u32(bytes, 20) as usize;
    let n = read_u32(bytes, 24) as usize;
    if scale == 0 {
        return Err(Error::format("scale", "must be positive"));
    }
    if lr == 0 {
        return Err(Error::format("lr_patch_size", "must be positive"));
    }
    if hr == 0 {
        return Err(Error::format("hr_patch_size", "must be positive"));
    }
    if n == 0 {
        return Err(Error::format("atom_count", "must be positive"));
    }
    let (ml, mh) = (lr * lr, hr * hr);
    let expected = (ml + mh)
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| Error::format("atom_count", "size overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            "payload",
            format!("expected {expected} bytes for the header shape, found {}", bytes.len()),
        ));
    }
    let body = &bytes[..expected - 4];
    let stored = read_u32(bytes, expected - 4);
    if crc32fast::hash(body) != stored {
        return Err(Error::format("crc32", "checksum mismatch"));
    }
    let floats: Vec<f64> = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let dict = CoupledDictionary {
        d_low: DMatrix::from_column_slice(ml, n, &floats[..ml * n]),
        d_high: DMatrix::from_column_slice(mh, n, &floats[ml * n..]),
        lr_patch_size: lr,
        hr_patch_size: hr,
        scale,
    };
    dict.check()?;
    Ok(dict)
}

pub fn save_dictionary(dict: &CoupledDictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dictionary(dict)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<CoupledDictionary> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dictionary(&bytes)
}
