//! Tensor checkpoints: the magic `LNCK`, a little-endian `u32` header
//! length, a JSON header, then the tensor as little-endian `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LNCK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d: usize,
    #[serde(rename = "L")]
    pub side: usize,
    #[serde(rename = "N")]
    pub components: usize,
    pub kappa: f64,
    pub dt: f64,
    pub step: u64,
    pub master_seed: u64,
    /// Logical tensor shape, row-major.
    pub shape: Vec<usize>,
    /// What the tensor holds, e.g. `"spins"` or `"covariance"`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

/// Writes atomically: to a sibling temporary file, then renamed into place.
pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, data: &[f64]) -> Result<()> {
    let expected: usize = header.shape.iter().product();
    if expected != data.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{expected} values for shape {:?}", header.shape),
            got: format!("{}", data.len()),
        });
    }
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(8 + json.len() + 8 * data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes
        .get(8..8 + len)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let payload = &bytes[8 + len..];
    let expected: usize = header.shape.iter().product();
    if payload.len() != 8 * expected {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, shape {:?} needs {}",
            payload.len(),
            header.shape,
            8 * expected
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}
