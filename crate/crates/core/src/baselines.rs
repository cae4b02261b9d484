//! Reference pruners: random masking and global [CLS]-attention top-k.

use crate::allocation::rank_order;
use crate::error::{Error, Result};
use crate::model::TokenSet;
use crate::rng::sample_indices;

fn check_budget(ts: &TokenSet, retain_count: usize) -> Result<()> {
    if retain_count > ts.len() {
        return Err(Error::BudgetExceeded {
            budget: retain_count,
            available: ts.len(),
        });
    }
    Ok(())
}

/// Uniform sample of `retain_count` tokens without replacement, sorted.
pub fn random_prune(ts: &TokenSet, retain_count: usize, seed: u64) -> Result<Vec<usize>> {
    check_budget(ts, retain_count)?;
    Ok(sample_indices(seed, ts.len(), retain_count))
}

/// The `retain_count` tokens with the highest attention (ties: lower index), sorted.
pub fn attention_topk_prune(ts: &TokenSet, retain_count: usize) -> Result<Vec<usize>> {
    check_budget(ts, retain_count)?;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| rank_order(&ts.attention, a, b));
    order.truncate(retain_count);
    order.sort_unstable();
    Ok(order)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;

    fn with_attention(attention: Vec<f32>) -> TokenSet {
        let n = attention.len();
        TokenSet {
            embeddings: Array2::ones((n, 2)),
            attention,
            grid_h: 1,
            grid_w: n,
            normalized: false,
        }
    }

    #[test]
    fn random_keeps_everything_at_full_budget() {
        let ts = with_attention(vec![0.0; 12]);
        assert_eq!(random_prune(&ts, 12, 99).unwrap(), (0..12).collect::<Vec<_>>());
        assert_eq!(random_prune(&ts, 5, 99).unwrap(), random_prune(&ts, 5, 99).unwrap());
        assert!(random_prune(&ts, 13, 0).is_err());
    }

    #[test]
    fn topk_on_sorted_and_flat_attention() {
        let ts = with_attention(vec![0.9, 0.8, 0.7, 0.6, 0.5]);
        assert_eq!(attention_topk_prune(&ts, 3).unwrap(), vec![0, 1, 2]);
        let flat = with_attention(vec![0.5; 5]);
        assert_eq!(attention_topk_prune(&flat, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn topk_matches_brute_force() {
        let attn = vec![0.3, 0.9, 0.1, 0.5, 0.7, 0.2];
        let ts = with_attention(attn.clone());
        let mut best = (f32::MIN, vec![]);
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    let s = attn[a] + attn[b] + attn[c];
                    if s > best.0 {
                        best = (s, vec![a, b, c]);
                    }
                }
            }
        }
        assert_eq!(attention_topk_prune(&ts, 3).unwrap(), best.1);
    }
}
