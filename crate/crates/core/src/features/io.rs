//! Binary feature files: `GKWF`, u32 version, u32 rows, u32 cols, then
//! `rows·cols` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GKWF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_features(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * features.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for v in features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "GKWF",
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::BadVersion {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    if rows == 0 || cols == 0 {
        return Err(Error::FileShape {
            path: path.to_path_buf(),
            detail: format!("header declares {rows}x{cols}"),
        });
    }
    let expected = HEADER_LEN + 4 * rows * cols;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::FileShape {
            path: path.to_path_buf(),
            detail: format!(
                "header declares {rows}x{cols} but {} trailing bytes follow the payload",
                bytes.len() - expected
            ),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureMatrix::new(rows, cols, data).map_err(|e| Error::FileShape {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn write_features(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(features)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

/// Reads a feature file and checks its width.
pub fn read_features_with_width(path: impl AsRef<Path>, cols: usize) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let m = read_features(path)?;
    if m.cols() != cols {
        return Err(Error::FileShape {
            path: path.to_path_buf(),
            detail: format!("expected {cols} columns, found {}", m.cols()),
        });
    }
    Ok(m)
}
