//! Parameter checkpoints.
//!
//! Layout, all integers little-endian:
//! `b"PGC1"`, `u32` format version, 32-byte SHA-256 of the network config,
//! `u64` parameter count, then that many `f32` values in layer order
//! (per conv block weight then bias, then head weight and bias).

use std::path::Path;

use super::net::{Tiny3d, Tiny3dConfig};
use super::tensor::Real;
use crate::error::{Error, Result};
use crate::tensor_file::write_bytes_atomic;

pub const MAGIC: &[u8; 4] = b"PGC1";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 32 + 8;

pub fn encode<T: Real>(net: &Tiny3d<T>) -> Vec<u8> {
    let params = net.flat_params();
    let mut out = Vec::with_capacity(HEADER + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&net.config().hash());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode<T: Real>(bytes: &[u8], config: &Tiny3dConfig, origin: &Path) -> Result<Tiny3d<T>> {
    let fail = |reason: String| Error::Format {
        path: origin.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(fail("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    if bytes[8..40] != config.hash() {
        return Err(fail(
            "checkpoint was written for a different network config".into(),
        ));
    }
    let n = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
    if bytes.len() != HEADER + 4 * n {
        return Err(fail(format!(
            "expected {} payload bytes, found {}",
            4 * n,
            bytes.len() - HEADER
        )));
    }
    let mut net = Tiny3d::new(config)?;
    if n != net.num_params() {
        return Err(fail(format!(
            "{n} parameters, config needs {}",
            net.num_params()
        )));
    }
    let params: Vec<T> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    net.set_flat_params(&params)?;
    Ok(net)
}

pub fn save<T: Real>(net: &Tiny3d<T>, path: &Path) -> Result<()> {
    let bytes = encode(net);
    write_bytes_atomic(path, &bytes)?;
    let back =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if back != bytes {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "read-back differs from written checkpoint".into(),
        });
    }
    Ok(())
}

pub fn load<T: Real>(config: &Tiny3dConfig, path: &Path) -> Result<Tiny3d<T>> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes, config, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejections() {
        let cfg = Tiny3dConfig::compact();
        let net = Tiny3d::<f32>::new(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&net, &path).unwrap();
        let back: Tiny3d<f32> = load(&cfg, &path).unwrap();
        assert_eq!(back.flat_params(), net.flat_params());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER + 4 * net.num_params());

        let mut other = cfg.clone();
        other.seed = 99;
        assert!(load::<f32>(&other, &path).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f32>(&bad, &cfg, &path).is_err());
        assert!(decode::<f32>(&bytes[..bytes.len() - 1], &cfg, &path).is_err());
    }
}
