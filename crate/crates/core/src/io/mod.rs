//! On-disk formats: the tensor container, mask files and PGM mask renders.

mod container;
mod mask;
mod pixmap;

use std::io::Write;
use std::path::Path;

pub use container::{
    decode_container, encode_container, load_tensors, read_tensors, save_token_sets, tensors_to_token_sets,
    token_sets_to_tensors, write_tensors, Manifest, Tensor, TensorEntry, CONTAINER_MAGIC,
};
pub use mask::{config_digest, MaskFile, MaskRecord};
pub use pixmap::{decode_pgm, encode_pgm, render_mask, Pixmap};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
