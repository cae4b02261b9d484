//! Mask files: one JSON document listing the retained tokens of every image.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::lab::Method;
use crate::model::PruneConfig;

const FORMAT: &str = "holov-mask";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub image_id: String,
    pub n_v: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub retain_count: usize,
    pub method: Method,
    pub config_digest: String,
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskFile {
    pub format: String,
    pub version: u32,
    pub images: Vec<MaskRecord>,
}

/// SHA-256 (lowercase hex) of the canonical config line
/// `method=<m>;retain=<n>;tau=<t>;crops=<c|auto>;partition=<p>;gamma_floor=<g>;seed=<s>`.
///
/// Floats use Rust's shortest round-trip formatting.
pub fn config_digest(method: Method, cfg: &PruneConfig) -> String {
    let crops = cfg.crop_count.map_or_else(|| "auto".to_string(), |c| c.to_string());
    let line = format!(
        "method={method};retain={};tau={:?};crops={crops};partition={};gamma_floor={:?};seed={}",
        cfg.retain_count, cfg.tau, cfg.partition_mode, cfg.gamma_floor, cfg.seed
    );
    hex::encode(Sha256::digest(line.as_bytes()))
}

impl MaskRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(format!("mask `{}`: {msg}", self.image_id)));
        if self.grid_h * self.grid_w != self.n_v {
            return bad(format!("grid {}x{} != {} tokens", self.grid_h, self.grid_w, self.n_v));
        }
        if self.retained.len() != self.retain_count {
            return bad(format!(
                "{} indices for retain_count {}",
                self.retained.len(),
                self.retain_count
            ));
        }
        if self.retained.windows(2).any(|w| w[0] >= w[1]) {
            return bad("indices not strictly increasing".into());
        }
        if self.retained.last().is_some_and(|&i| i >= self.n_v) {
            return bad("index out of range".into());
        }
        Ok(())
    }

    /// Fails unless the record was produced with `cfg`.
    pub fn verify_digest(&self, cfg: &PruneConfig) -> Result<()> {
        if config_digest(self.method, cfg) == self.config_digest {
            Ok(())
        } else {
            Err(Error::DigestMismatch(self.image_id.clone()))
        }
    }
}

impl MaskFile {
    pub fn new(images: Vec<MaskRecord>) -> Self {
        MaskFile {
            format: FORMAT.into(),
            version: VERSION,
            images,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file: MaskFile = serde_json::from_slice(bytes)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported mask format {} v{}",
                file.format, file.version
            )));
        }
        for record in &file.images {
            record.validate()?;
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    pub fn image(&self, id: Option<&str>) -> Result<&MaskRecord> {
        match id {
            Some(id) => self
                .images
                .iter()
                .find(|r| r.image_id == id)
                .ok_or_else(|| Error::Format(format!("no image `{id}` in mask file"))),
            None => self
                .images
                .first()
                .ok_or_else(|| Error::Format("mask file has no images".into())),
        }
    }
}
