//! Splitting a token set into crops.

use crate::error::{Error, Result};
use crate::model::{CropPartition, PartitionMode, PruneConfig, TokenSet};

/// Partitions `ts` into the crop count selected by `cfg`.
pub fn make_partition(ts: &TokenSet, cfg: &PruneConfig) -> Result<CropPartition> {
    let crops = cfg.effective_crop_count(ts.len());
    partition_with(ts.len(), ts.grid_h, ts.grid_w, crops, cfg.partition_mode)
}

/// Partitions `n_tokens` tokens laid out on a `grid_h × grid_w` grid into `crops` crops.
///
/// Grid tiling factors `crops = r × s` with `r` row bands and `s` column
/// bands, choosing the most square factorization that fits the grid
/// (`r ≤ s` on ties). Band remainders go to the leading bands. Crops are
/// numbered band-major: `crop = row_band * s + col_band`. When no
/// factorization fits (e.g. a prime crop count wider than a one-row grid)
/// the partition falls back to row-major blocks.
pub fn partition_with(
    n_tokens: usize,
    grid_h: usize,
    grid_w: usize,
    crops: usize,
    mode: PartitionMode,
) -> Result<CropPartition> {
    if crops == 0 {
        return Err(Error::InvalidConfig("crop count must be ≥ 1".into()));
    }
    if crops > n_tokens {
        return Err(Error::TooManyCrops {
            crops,
            tokens: n_tokens,
        });
    }
    if mode == PartitionMode::GridTiles {
        if grid_h * grid_w != n_tokens {
            return Err(Error::GridMismatch(format!("{grid_h}x{grid_w} != {n_tokens} tokens")));
        }
        if let Some((r, s)) = tile_factors(crops, grid_h, grid_w) {
            return Ok(grid_tiles(grid_h, grid_w, r, s));
        }
    }
    Ok(row_major_blocks(n_tokens, crops))
}

/// Factor pair `(r, s)` with `r * s == crops`, `r ≤ grid_h`, `s ≤ grid_w`,
/// minimizing `|r - s|` and preferring `r ≤ s`.
pub fn tile_factors(crops: usize, grid_h: usize, grid_w: usize) -> Option<(usize, usize)> {
    (1..=crops)
        .filter(|&r| crops.is_multiple_of(r))
        .map(|r| (r, crops / r))
        .filter(|&(r, s)| r <= grid_h && s <= grid_w)
        .min_by_key(|&(r, s)| (r.abs_diff(s), r > s, r))
}

/// Band boundaries splitting `len` items into `parts` near-equal runs, leading runs larger.
fn band_bounds(len: usize, parts: usize) -> Vec<usize> {
    let base = len / parts;
    let extra = len % parts;
    let mut bounds = Vec::with_capacity(parts + 1);
    let mut at = 0;
    bounds.push(at);
    for p in 0..parts {
        at += base + usize::from(p < extra);
        bounds.push(at);
    }
    bounds
}

fn band_of(bounds: &[usize], x: usize) -> usize {
    // bounds is sorted; the band is the last start ≤ x
    bounds.partition_point(|&b| b <= x) - 1
}

fn grid_tiles(grid_h: usize, grid_w: usize, r: usize, s: usize) -> CropPartition {
    let rows = band_bounds(grid_h, r);
    let cols = band_bounds(grid_w, s);
    let assignment = (0..grid_h * grid_w)
        .map(|t| band_of(&rows, t / grid_w) * s + band_of(&cols, t % grid_w))
        .collect();
    CropPartition::from_assignment(r * s, assignment)
}

fn row_major_blocks(n_tokens: usize, crops: usize) -> CropPartition {
    let bounds = band_bounds(n_tokens, crops);
    let assignment = (0..n_tokens).map(|t| band_of(&bounds, t)).collect();
    CropPartition::from_assignment(crops, assignment)
}
