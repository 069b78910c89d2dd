//! Model file layout (all integers little-endian):
//!
//! ```text
//! offset  size  content
//! 0       4     magic "SCAE"
//! 4       4     u32 format version
//! 8       8     u64 header length N
//! 16      N     UTF-8 JSON header:
//!               {"config": {...}, "output_channel_indices": [...],
//!                "tensors": [{"name": "...", "shape": [...]}, ...]}
//! 16+N    8*M   f64 tensor values, tensors in header order, row-major
//! end-32  32    SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AutoencoderParams, ModelConfig};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SCAE";
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    output_channel_indices: Vec<usize>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

pub(crate) fn to_bytes(params: &AutoencoderParams, config: &ModelConfig) -> Vec<u8> {
    let header = Header {
        config: config.clone(),
        output_channel_indices: config.output_channels.clone(),
        tensors: params
            .layout()
            .into_iter()
            .map(|(name, shape)| TensorEntry { name, shape })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * params.n_values() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<(AutoencoderParams, ModelConfig)> {
    let fmt = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(fmt("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 16 + DIGEST_LEN {
        return Err(fmt("truncated model file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(fmt("checksum mismatch; file is truncated or corrupted"));
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| fmt("header length exceeds file"))?;
    let header: Header = serde_json::from_slice(&body[16..header_end])
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let config = header.config;
    config
        .validate()
        .map_err(|e| Error::Format(format!("stored config invalid: {e}")))?;
    if header.output_channel_indices != config.output_channels {
        return Err(fmt("output channel list disagrees with config"));
    }

    let mut params = AutoencoderParams::zeros(&config);
    let layout = params.layout();
    if layout.len() != header.tensors.len()
        || layout
            .iter()
            .zip(&header.tensors)
            .any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(fmt("tensor layout does not match config"));
    }
    let payload = &body[header_end..];
    if payload.len() != 8 * params.n_values() {
        return Err(fmt("tensor payload has wrong length"));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for (_, t) in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().expect("length checked");
        }
    }
    if let Some(name) = params.first_non_finite() {
        return Err(Error::Format(format!("tensor `{name}` holds non-finite values")));
    }
    Ok((params, config))
}

/// Writes parameters and config to `path`. Identical inputs give
/// identical bytes.
pub fn save_model(params: &AutoencoderParams, config: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if params.layout() != AutoencoderParams::zeros(config).layout() {
        return Err(Error::usage("parameters do not match config shapes"));
    }
    std::fs::write(path, to_bytes(params, config)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(AutoencoderParams, ModelConfig)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
