//! Model checkpoint: the 8-byte magic `MILPF001`, then `d`, `h1`, `h2` as
//! little-endian `u32`, the global and local aggregator codes and the
//! inference mode code as single bytes, then every parameter as little-endian
//! `f64` in layout order.
//!
//! Aggregator codes: 0 none, 1 mean, 2 max, 3 attention. Mode codes: 0 mil,
//! 1 sil_mean, 2 sil_max.

use std::fs;
use std::path::Path;

use super::{AggConfig, AggKind, HeadDims, HeadParams, Model, ParamLayout, TrainMode};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MILPF001";
const HEADER_LEN: usize = 8 + 3 * 4 + 3;

pub fn write_checkpoint(model: &Model) -> Vec<u8> {
    let p = &model.params;
    let dims = p.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * p.values().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [dims.embed_dim, dims.hidden1, dims.hidden2] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(p.agg().global.code());
    out.push(p.agg().local.code());
    out.push(model.mode.code());
    for v in p.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic (not a MILPF001 checkpoint)".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let dims = HeadDims {
        embed_dim: u32_at(8),
        hidden1: u32_at(12),
        hidden2: u32_at(16),
    };
    let kind = |c: u8| AggKind::from_code(c).ok_or_else(|| Error::Checkpoint(format!("unknown aggregator code {c}")));
    let agg = AggConfig::new(kind(bytes[20])?, kind(bytes[21])?)?;
    let mode = TrainMode::from_code(bytes[22])
        .ok_or_else(|| Error::Checkpoint(format!("unknown mode code {}", bytes[22])))?;
    let layout = ParamLayout::new(dims, agg)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * layout.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes for {dims:?}, found {}",
            8 * layout.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = HeadParams::from_values(layout, values)?;
    params.check_finite()?;
    Model::new(params, mode)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let layout = ParamLayout::new(HeadDims::new(5), AggConfig::default()).unwrap();
        let values = (0..layout.len()).map(|i| (i as f64).sin()).collect();
        Model::new(HeadParams::from_values(layout, values).unwrap(), TrainMode::Mil).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let bytes = write_checkpoint(&m);
        assert_eq!(&bytes[..8], b"MILPF001");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * m.params.values().len());
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = write_checkpoint(&model());
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_checkpoint(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        let mut bad = bytes.clone();
        bad[21] = 9;
        assert!(read_checkpoint(&bad).is_err());
        let mut bad = bytes;
        let n = bad.len();
        bad[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(read_checkpoint(&bad), Err(Error::NonFiniteParam { .. })));
    }
}
