//! Tensor container.
//!
//! ```text
//! bytes 0..8    magic "HOLOVTC1"
//! bytes 8..16   manifest length L, u64 little-endian
//! bytes 16..16+L  manifest, UTF-8 JSON
//! bytes 16+L..  payload: raw little-endian f32, row-major
//! ```
//!
//! Manifest offsets are relative to the start of the payload. Each tensor
//! carries the CRC-32 (IEEE) of its payload bytes as 8 lowercase hex digits.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::model::TokenSet;

pub const CONTAINER_MAGIC: &[u8; 8] = b"HOLOVTC1";
const FORMAT: &str = "holov-tensors";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub length: u64,
    pub crc32: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
}

/// A named f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

pub fn encode_container(tensors: &[Tensor]) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::Shape(format!(
                "tensor `{}` has shape {:?} but {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        let start = payload.len();
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            dtype: "f32".into(),
            shape: t.shape.clone(),
            offset: start as u64,
            length: (payload.len() - start) as u64,
            crc32: crc_hex(&payload[start..]),
        });
    }
    let manifest = serde_json::to_vec_pretty(&Manifest {
        format: FORMAT.into(),
        version: VERSION,
        tensors: entries,
    })?;
    let mut out = Vec::with_capacity(16 + manifest.len() + payload.len());
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_container(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let bad = |msg: &str| Error::Format(msg.to_string());
    if bytes.len() < 16 || &bytes[..8] != CONTAINER_MAGIC {
        return Err(bad("missing HOLOVTC1 magic"));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let manifest_end = 16usize
        .checked_add(usize::try_from(manifest_len).map_err(|_| bad("manifest length overflow"))?)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("manifest runs past end of file"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[16..manifest_end])?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let payload = &bytes[manifest_end..];

    let mut spans: Vec<(u64, u64, &str)> = Vec::new();
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        if e.dtype != "f32" {
            return Err(Error::Format(format!(
                "tensor `{}` has unsupported dtype {}",
                e.name, e.dtype
            )));
        }
        if e.shape.is_empty() || e.shape.contains(&0) {
            return Err(Error::Shape(format!(
                "tensor `{}` has empty shape {:?}",
                e.name, e.shape
            )));
        }
        let count: usize = e.shape.iter().product();
        if e.length != 4 * count as u64 {
            return Err(Error::Shape(format!(
                "tensor `{}` shape {:?} needs {} bytes, manifest says {}",
                e.name,
                e.shape,
                4 * count,
                e.length
            )));
        }
        let end = e
            .offset
            .checked_add(e.length)
            .filter(|&end| end <= payload.len() as u64)
            .ok_or_else(|| Error::Format(format!("tensor `{}` runs past end of payload", e.name)))?;
        if tensors.iter().any(|t: &Tensor| t.name == e.name) {
            return Err(Error::Format(format!("duplicate tensor `{}`", e.name)));
        }
        let raw = &payload[e.offset as usize..end as usize];
        if crc_hex(raw) != e.crc32 {
            return Err(Error::Checksum { name: e.name.clone() });
        }
        spans.push((e.offset, end, &e.name));
        tensors.push(Tensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data: raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        });
    }
    spans.sort();
    if let Some(w) = spans.windows(2).find(|w| w[1].0 < w[0].1) {
        return Err(Error::Format(format!("tensors `{}` and `{}` overlap", w[0].2, w[1].2)));
    }
    Ok(tensors)
}

pub fn write_tensors(path: &Path, tensors: &[Tensor]) -> Result<()> {
    write_atomic(path, &encode_container(tensors)?)
}

pub fn read_tensors(path: &Path) -> Result<Vec<Tensor>> {
    decode_container(&read_file(path)?)
}

/// Tensors `<id>/embeddings` (`N_v × d`) and `<id>/attention` (`grid_h × grid_w`) per image.
pub fn token_sets_to_tensors(sets: &[(String, TokenSet)]) -> Vec<Tensor> {
    sets.iter()
        .flat_map(|(id, ts)| {
            [
                Tensor {
                    name: format!("{id}/embeddings"),
                    shape: vec![ts.len(), ts.dim()],
                    data: ts.embeddings.iter().copied().collect(),
                },
                Tensor {
                    name: format!("{id}/attention"),
                    shape: vec![ts.grid_h, ts.grid_w],
                    data: ts.attention.clone(),
                },
            ]
        })
        .collect()
}

pub fn save_token_sets(path: &Path, sets: &[(String, TokenSet)]) -> Result<()> {
    write_tensors(path, &token_sets_to_tensors(sets))
}

/// Splits `name` into (image id, role); bare names belong to image "0".
fn split_name(name: &str) -> (&str, &str) {
    match name.rsplit_once('/') {
        Some((id, role)) => (id, role),
        None => ("0", name),
    }
}

/// Groups container tensors into validated token sets, in manifest order.
///
/// A rank-2 attention tensor gives the grid; a rank-1 one is read as a
/// square grid when `N_v` is a perfect square and as one row otherwise.
pub fn tensors_to_token_sets(tensors: &[Tensor]) -> Result<Vec<(String, TokenSet)>> {
    let mut ids: Vec<&str> = Vec::new();
    for t in tensors {
        let (id, _) = split_name(&t.name);
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    if ids.is_empty() {
        return Err(Error::MissingTensor("embeddings".into()));
    }
    ids.into_iter()
        .map(|id| {
            let find = |role: &str| {
                tensors
                    .iter()
                    .find(|t| split_name(&t.name) == (id, role))
                    .ok_or_else(|| {
                        let bare = tensors.iter().any(|t| !t.name.contains('/'));
                        Error::MissingTensor(if bare && id == "0" {
                            role.into()
                        } else {
                            format!("{id}/{role}")
                        })
                    })
            };
            let emb = find("embeddings")?;
            let attn = find("attention")?;
            let [n, d] = emb.shape[..] else {
                return Err(Error::Shape(format!(
                    "`{}` must be rank 2, got {:?}",
                    emb.name, emb.shape
                )));
            };
            let (grid_h, grid_w) = match attn.shape[..] {
                [h, w] => (h, w),
                [len] => {
                    let side = (len as f64).sqrt().round() as usize;
                    if side * side == len {
                        (side, side)
                    } else {
                        (1, len)
                    }
                }
                _ => {
                    return Err(Error::Shape(format!(
                        "`{}` must be rank 1 or 2, got {:?}",
                        attn.name, attn.shape
                    )))
                }
            };
            let embeddings =
                Array2::from_shape_vec((n, d), emb.data.clone()).map_err(|e| Error::Shape(e.to_string()))?;
            let ts = TokenSet::new(embeddings, attn.data.clone(), grid_h, grid_w)?;
            Ok((id.to_string(), ts))
        })
        .collect()
}

/// Reads a container and returns its token sets keyed by image id.
pub fn load_tensors(path: &Path) -> Result<Vec<(String, TokenSet)>> {
    tensors_to_token_sets(&read_tensors(path)?)
}
