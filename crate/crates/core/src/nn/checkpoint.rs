//! Single-file model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   8  magic "SPCMODEL"
//! 8   4  format version (u32, currently 1)
//! 12  8  header length H (u64)
//! 20  H  UTF-8 JSON header: model config, seed, tensor names and shapes
//! ..     tensor data, f64 IEEE-754, row-major, header order
//! ..  32 SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{CompletionModel, ModelConfig};
use crate::error::{Error, Result};
use crate::io::atomic_write;

pub const MAGIC: &[u8; 8] = b"SPCMODEL";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX: usize = 8 + 4 + 8;
const DIGEST: usize = 32;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn to_bytes(model: &CompletionModel) -> Vec<u8> {
    let p = model.params();
    let header = Header {
        config: model.config().clone(),
        seed: model.seed(),
        tensors: p
            .names()
            .iter()
            .zip(p.tensors())
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREFIX + json.len() + p.scalar_count() * 8 + DIGEST);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in p.tensors() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<CompletionModel> {
    if bytes.len() < PREFIX + DIGEST {
        return Err(bad(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes"));
    let hend = usize::try_from(hlen)
        .ok()
        .and_then(|h| h.checked_add(PREFIX))
        .filter(|&e| e <= body.len())
        .ok_or_else(|| bad("header length exceeds file"))?;
    let header: Header =
        serde_json::from_slice(&body[PREFIX..hend]).map_err(|e| bad(format!("header: {e}")))?;
    let mut model = CompletionModel::new(header.config, header.seed)?;
    let store = model.params();
    if store.len() != header.tensors.len() {
        return Err(bad(format!(
            "{} tensors in file, model has {}",
            header.tensors.len(),
            store.len()
        )));
    }
    for (entry, (name, t)) in header.tensors.iter().zip(store.names().iter().zip(store.tensors())) {
        if &entry.name != name || entry.rows != t.rows || entry.cols != t.cols {
            return Err(bad(format!(
                "tensor {} ({}x{}) does not match model tensor {name} ({}x{})",
                entry.name, entry.rows, entry.cols, t.rows, t.cols
            )));
        }
    }
    let data = &body[hend..];
    if data.len() != store.scalar_count() * 8 {
        return Err(bad(format!(
            "expected {} bytes of tensor data, found {}",
            store.scalar_count() * 8,
            data.len()
        )));
    }
    let mut chunks = data.chunks_exact(8);
    for t in model.params_mut().tensors_mut() {
        for v in t.data.iter_mut() {
            let c = chunks.next().expect("length checked");
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    Ok(model)
}

pub fn save(model: &CompletionModel, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<CompletionModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = CompletionModel::new(ModelConfig::desk(), 5).unwrap();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corruption_detected() {
        let m = CompletionModel::new(ModelConfig::desk(), 5).unwrap();
        let mut bytes = to_bytes(&m);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(_))));
        assert!(from_bytes(&bytes[..10]).is_err());
        assert!(from_bytes(b"not a checkpoint at all, definitely not").is_err());
    }
}
