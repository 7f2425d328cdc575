//! `PGT1` tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size      field
//! 0       4         magic "PGT1"
//! 4       4  u32    dtype code (1 = f32)
//! 8       4  u32    rank r
//! 12      8*r u64   shape, outermost dimension first
//! 12+8r   4*n f32   payload, row-major, n = product(shape)
//! ```
//!
//! Clips are stored as `[T, C, H, W]` and flow clips as `[2, T-1, H, W]`
//! (channel 0 = horizontal displacement, channel 1 = vertical).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PGT1";
pub const DTYPE_F32: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorData {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidInput(format!(
                "payload length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        Ok(TensorData { shape, data })
    }
}

pub fn encode(t: &TensorData) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * t.shape.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
    for &d in &t.shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<TensorData> {
    let bad = |reason: String| Error::Format {
        path: origin.to_path_buf(),
        reason,
    };
    if bytes.len() < 12 {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let dtype = u32_at(4);
    if dtype != DTYPE_F32 {
        return Err(bad(format!("unsupported dtype code {dtype}")));
    }
    let rank = u32_at(8) as usize;
    let header = 12 + 8 * rank;
    if bytes.len() < header {
        return Err(bad(format!("truncated shape for rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut n: usize = 1;
    for i in 0..rank {
        let off = 12 + 8 * i;
        let d = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let d = usize::try_from(d).map_err(|_| bad(format!("dimension {d} too large")))?;
        n = n
            .checked_mul(d)
            .ok_or_else(|| bad("element count overflows".into()))?;
        shape.push(d);
    }
    let payload = &bytes[header..];
    if payload.len() != n * 4 {
        return Err(bad(format!(
            "payload is {} bytes, shape {shape:?} needs {}",
            payload.len(),
            n * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(TensorData { shape, data })
}

pub fn read(path: &Path) -> Result<TensorData> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes, path)
}

/// Writes via a temporary sibling and rename, then reads the file back to validate it.
pub fn write(path: &Path, t: &TensorData) -> Result<()> {
    let bytes = encode(t);
    write_bytes_atomic(path, &bytes)?;
    let back = read(path)?;
    if back != *t {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "read-back does not match written tensor".into(),
        });
    }
    Ok(())
}

pub(crate) fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f =
        fs::File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}
