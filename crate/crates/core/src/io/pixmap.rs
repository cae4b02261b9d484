//! Binary PGM (`P5`) renders of masks: white for retained tokens, black for pruned.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    /// Row-major 8-bit gray levels.
    pub pixels: Vec<u8>,
}

/// One pixel per token of a `grid_h × grid_w` grid.
pub fn render_mask(grid_h: usize, grid_w: usize, retained: &[usize]) -> Result<Pixmap> {
    let n = grid_h * grid_w;
    let mut pixels = vec![0u8; n];
    for &i in retained {
        if i >= n {
            return Err(Error::GridMismatch(format!("index {i} outside {grid_h}x{grid_w} grid")));
        }
        pixels[i] = 255;
    }
    Ok(Pixmap {
        width: grid_w,
        height: grid_h,
        pixels,
    })
}

/// `P5\n<w> <h>\n255\n` followed by the pixels.
pub fn encode_pgm(p: &Pixmap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", p.width, p.height).into_bytes();
    out.extend_from_slice(&p.pixels);
    out
}

/// Parses the exact header layout written by [`encode_pgm`].
pub fn decode_pgm(bytes: &[u8]) -> Result<Pixmap> {
    let bad = |msg: &str| Error::Format(format!("pgm: {msg}"));
    let mut fields = Vec::with_capacity(4);
    let mut at = 0;
    while fields.len() < 4 {
        let end = bytes[at..]
            .iter()
            .position(|&b| b == b'\n' || b == b' ')
            .ok_or_else(|| bad("truncated header"))?;
        fields.push(std::str::from_utf8(&bytes[at..at + end]).map_err(|_| bad("non-ascii header"))?);
        at += end + 1;
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let pixels = bytes[at..].to_vec();
    if pixels.len() != width * height {
        return Err(bad("pixel count does not match header"));
    }
    Ok(Pixmap { width, height, pixels })
}
