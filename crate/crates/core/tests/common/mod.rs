#![allow(dead_code)]

use holov::rng::{below, seeded};
use holov::{normalize_rows, PartitionMode, TokenSet};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn int_in(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    lo + below(rng, (hi - lo + 1) as u64) as usize
}

/// Normalized token set with Gaussian embeddings and uniform attention.
pub fn random_set(rng: &mut ChaCha8Rng, grid_h: usize, grid_w: usize, d: usize) -> TokenSet {
    let n = grid_h * grid_w;
    let emb = Array2::from_shape_simple_fn((n, d), || rng.sample::<f32, _>(StandardNormal));
    let attention = (0..n).map(|_| rng.random::<f32>()).collect();
    let ts = TokenSet::new(emb, attention, grid_h, grid_w).unwrap();
    normalize_rows(&ts).unwrap()
}

/// Random grid with at most `max_tokens` cells.
pub fn random_grid(rng: &mut ChaCha8Rng, max_tokens: usize) -> (usize, usize) {
    let h = int_in(rng, 1, 32.min(max_tokens));
    let w = int_in(rng, 1, (max_tokens / h).min(32));
    (h, w)
}

pub fn random_mode(rng: &mut ChaCha8Rng) -> PartitionMode {
    if rng.random::<bool>() {
        PartitionMode::GridTiles
    } else {
        PartitionMode::RowMajorBlocks
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}
