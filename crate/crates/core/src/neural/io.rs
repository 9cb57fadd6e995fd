//! `LIMBNN1` weight files: magic, u32 header length, JSON header, then
//! little-endian f32 tensors in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{Network, NetworkSpec, Param};
use super::tensor::Scalar;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 7] = b"LIMBNN1";

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    seed: u64,
    layers: Vec<LayerEntry>,
}

pub fn encode_weights<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let header = Header {
        spec: net.spec().clone(),
        seed: net.seed(),
        layers: net
            .params()
            .iter()
            .map(|p| LayerEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                trainable: p.trainable,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(11 + json.len() + 4 * net.params().iter().map(|p| p.data.len()).sum::<usize>());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.params() {
        for v in &p.data {
            out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    out
}

pub fn decode_weights<T: Scalar>(bytes: &[u8], origin: &Path) -> Result<Network<T>> {
    let bad = |reason: &str| Error::format(origin, reason);
    if bytes.len() < 11 || &bytes[..7] != WEIGHTS_MAGIC {
        return Err(bad("not a LIMBNN1 weights file"));
    }
    let len = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    let json = bytes.get(11..11 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(&format!("header: {e}")))?;
    let mut offset = 11 + len;
    let mut params = Vec::with_capacity(header.layers.len());
    for layer in header.layers {
        let count: usize = layer.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 4 * count)
            .ok_or_else(|| bad(&format!("truncated tensor {}", layer.name)))?;
        offset += 4 * count;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        params.push(Param {
            name: layer.name,
            shape: layer.shape,
            data,
            trainable: layer.trainable,
        });
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Network::from_params(header.spec, header.seed, params)
}

pub fn save_weights<T: Scalar>(path: &Path, net: &Network<T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_weights(net)).map_err(|e| Error::io(path, e))
}

/// Load weights; a missing file is a configuration error naming the path.
pub fn load_weights<T: Scalar>(path: &Path) -> Result<Network<T>> {
    if !path.exists() {
        return Err(Error::config(format!("network weights not found: {}", path.display())));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, path)
}
