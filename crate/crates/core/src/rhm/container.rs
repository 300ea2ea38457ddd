//! `FREC` model files: magic, `u32` version, `u64` header length, a JSON
//! header, then the little-endian `f64` payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::FetConfig;
use super::{FetModel, TrainingMetadata};
use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FREC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    /// Byte length.
    length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: FetConfig,
    image_channels: usize,
    tensors: Vec<TensorEntry>,
    metadata: TrainingMetadata,
}

fn bad(path: &str, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.into(),
        reason: reason.into(),
    }
}

impl FetModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let tensors = self
            .params
            .names
            .iter()
            .zip(&self.params.tensors)
            .map(|(name, t)| {
                let length = 8 * t.len() as u64;
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    length,
                };
                offset += length;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            image_channels: self.image_channels,
            tensors,
            metadata: self.metadata.clone(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.params.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a container; `origin` names the source in errors.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad(origin, "missing FREC magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(origin, format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|n| n.checked_add(16))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad(origin, "header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| bad(origin, format!("header: {e}")))?;
        let payload = &bytes[header_end..];

        let mut expected = 0u64;
        for e in &header.tensors {
            let n: u64 = e.shape.iter().map(|&d| d as u64).product();
            if e.offset != expected || e.length != 8 * n {
                return Err(bad(origin, format!("tensor {} does not tile the payload", e.name)));
            }
            expected += e.length;
        }
        if expected != payload.len() as u64 {
            return Err(bad(
                origin,
                format!("payload is {} bytes, table covers {expected}", payload.len()),
            ));
        }

        let mut model = FetModel::new(header.config, header.image_channels, 0)
            .map_err(|e| bad(origin, e.to_string()))?;
        if model.params.len() != header.tensors.len() {
            return Err(bad(origin, "tensor table does not match the configured network"));
        }
        for (i, e) in header.tensors.iter().enumerate() {
            if model.params.names[i] != e.name || model.params.tensors[i].shape() != e.shape.as_slice() {
                return Err(bad(origin, format!("unexpected tensor {} {:?}", e.name, e.shape)));
            }
            let start = e.offset as usize;
            let data = payload[start..start + e.length as usize]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            model.params.tensors[i] = Tensor::new(e.shape.clone(), data)?;
        }
        model.metadata = header.metadata;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}
