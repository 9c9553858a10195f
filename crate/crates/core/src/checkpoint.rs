//! Weight files: one JSON header line followed by little-endian `f32` payload.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use advpad_nn::Param;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT: &str = "advpad-ckpt/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    /// `pad`, `cae`, or `embedder`.
    pub kind: String,
    pub backbone: String,
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    /// Everything needed to rebuild the architecture.
    pub arch: serde_json::Value,
    pub shapes: Vec<Vec<usize>>,
}

pub fn write(path: &Path, header: &CheckpointHeader, params: &[&Param]) -> Result<()> {
    let mut header = header.clone();
    header.format = FORMAT.into();
    header.shapes = params.iter().map(|p| p.value.shape().to_vec()).collect();
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    for p in params {
        for v in p.value.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(CheckpointHeader, Vec<Vec<f32>>)> {
    let mut rdr = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    rdr.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Checkpoint(format!("{}: bad header: {e}", path.display())))?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!("{}: unsupported format {}", path.display(), header.format)));
    }
    let mut tensors = Vec::with_capacity(header.shapes.len());
    for shape in &header.shapes {
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        rdr.read_exact(&mut bytes)
            .map_err(|_| Error::Checkpoint(format!("{}: truncated payload", path.display())))?;
        tensors.push(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect());
    }
    Ok((header, tensors))
}

/// Copies stored tensors into freshly built parameters, checking shapes.
pub fn restore(params: Vec<&mut Param>, tensors: Vec<Vec<f32>>, shapes: &[Vec<usize>]) -> Result<()> {
    if params.len() != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count mismatch: model has {}, file has {}",
            params.len(),
            tensors.len()
        )));
    }
    for ((p, data), shape) in params.into_iter().zip(tensors).zip(shapes) {
        if p.value.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!("shape mismatch: {:?} vs {:?}", p.value.shape(), shape)));
        }
        p.value.iter_mut().zip(data).for_each(|(v, d)| *v = d);
    }
    Ok(())
}

/// SHA-256 over every parameter value, in order.
pub fn weights_hash(params: &[&Param]) -> String {
    let mut h = Sha256::new();
    for p in params {
        for v in p.value.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut f = fs::File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Short stable digest of any serializable configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("configs serialize");
    bytes_hash(&json)[..16].to_string()
}
