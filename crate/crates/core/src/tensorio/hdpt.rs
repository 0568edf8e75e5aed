//! HDPT tensor files.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 4    | magic `HDPT`              |
//! | 4      | 1    | version (1)               |
//! | 5      | 1    | total bits                |
//! | 6      | 1    | fraction bits             |
//! | 7      | 1    | reserved (0)              |
//! | 8      | 4    | rows (u32)                |
//! | 12     | 4    | cols (u32)                |
//! | 16     | 2·n  | row-major i16 raw values  |

use std::path::Path;

use super::{Matrix, TensorError};
use crate::fxp::FxpFormat;

pub const HDPT_MAGIC: &[u8; 4] = b"HDPT";
pub const HDPT_VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_tensor(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * m.raws().len());
    out.extend_from_slice(HDPT_MAGIC);
    out.push(HDPT_VERSION);
    out.push(m.format().total_bits());
    out.push(m.format().frac_bits());
    out.push(0);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &raw in m.raws() {
        out.extend_from_slice(&(raw as i16).to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Matrix, TensorError> {
    if bytes.len() < 4 || &bytes[..4] != HDPT_MAGIC {
        return Err(TensorError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(TensorError::TruncatedPayload { expected: HEADER_LEN, found: bytes.len() });
    }
    if bytes[4] != HDPT_VERSION {
        return Err(TensorError::VersionMismatch { found: bytes[4], expected: HDPT_VERSION });
    }
    let format = FxpFormat::new(bytes[5], bytes[6])
        .map_err(|e| TensorError::FormatMismatch(format!("header declares an invalid format: {e}")))?;
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(2))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| TensorError::Shape(format!("{rows}x{cols} too large")))?;
    if bytes.len() < expected {
        return Err(TensorError::TruncatedPayload { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(TensorError::TrailingData { extra: bytes.len() - expected });
    }
    let data: Vec<i32> = bytes[HEADER_LEN..]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
        .collect();
    if let Some(raw) = data.iter().find(|&&r| !format.contains_raw(r as i64)) {
        return Err(TensorError::FormatMismatch(format!("raw {raw} does not fit in {format}")));
    }
    Matrix::new(rows, cols, format, data)
}

pub fn save_tensor(path: &Path, m: &Matrix) -> Result<(), TensorError> {
    std::fs::write(path, encode_tensor(m)).map_err(|source| TensorError::Io { path: path.to_path_buf(), source })
}

pub fn load_tensor(path: &Path) -> Result<Matrix, TensorError> {
    let bytes = std::fs::read(path).map_err(|source| TensorError::Io { path: path.to_path_buf(), source })?;
    decode_tensor(&bytes)
}

/// Loads a tensor and checks it was stored in `format`.
pub fn load_tensor_expecting(path: &Path, format: FxpFormat) -> Result<Matrix, TensorError> {
    let m = load_tensor(path)?;
    if m.format() != format {
        return Err(TensorError::FormatMismatch(format!(
            "{} is stored as {}, expected {format}",
            path.display(),
            m.format()
        )));
    }
    Ok(m)
}
