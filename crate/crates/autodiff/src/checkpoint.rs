//! Checkpoint container.
//!
//! Layout: the 8 magic bytes `BLDCKPT1`, a little-endian `u64` header length,
//! the JSON header, then every tensor's scalars as little-endian `f64` in
//! manifest order. Offsets in the manifest are relative to the payload start.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"BLDCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hyperparameters: serde_json::Value,
    pub params: ParamStore,
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let mut offset = 0u64;
    let tensors = ckpt
        .params
        .iter()
        .map(|(name, t)| {
            let e = ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
                offset,
            };
            offset += 8 * t.len() as u64;
            e
        })
        .collect();
    let header = Header {
        format_version: FORMAT_VERSION,
        hyperparameters: ckpt.hyperparameters.clone(),
        tensors,
    };
    let bytes = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(&bytes)?;
    for t in ckpt.params.tensors() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header_bytes = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.format_version));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mut params = ParamStore::new();
    for e in header.tensors {
        if e.dtype != "f64" {
            return Err(CheckpointError::Dtype(e.dtype));
        }
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + 8 * n;
        let bad = |reason: &str| CheckpointError::Tensor {
            name: e.name.clone(),
            reason: reason.into(),
        };
        let bytes = payload.get(start..end).ok_or_else(|| bad("payload truncated"))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(e.shape.clone(), data).map_err(|err| bad(&err.to_string()))?;
        params.insert(e.name.clone(), t).map_err(|err| bad(&err.to_string()))?;
    }
    Ok(Checkpoint {
        hyperparameters: header.hyperparameters,
        params,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    write_checkpoint(BufWriter::new(File::create(path)?), ckpt)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
