use crate::allocation::rank_order;
use crate::error::{Error, Result};
use crate::model::{row_norm, CropPartition, TokenSet};

pub(crate) fn cosine(ts: &TokenSet, a: usize, b: usize) -> f64 {
    let (ra, rb) = (ts.embeddings.row(a), ts.embeddings.row(b));
    let dot: f64 = ra
        .iter()
        .zip(rb.iter())
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    let denom = row_norm(ra) * row_norm(rb);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Mean pairwise cosine similarity among the retained tokens.
pub fn redundancy_metric(ts: &TokenSet, retained: &[usize]) -> Result<f32> {
    if retained.len() < 2 {
        return Err(Error::TooFewRetained);
    }
    let mut total = 0.0f64;
    let mut pairs = 0u64;
    for (k, &a) in retained.iter().enumerate() {
        for &b in &retained[k + 1..] {
            total += cosine(ts, a, b);
            pairs += 1;
        }
    }
    Ok((total / pairs as f64).clamp(-1.0, 1.0) as f32)
}

/// Fraction of crops holding at least one retained token.
pub fn spatial_coverage(part: &CropPartition, retained: &[usize]) -> f32 {
    let mut hit = vec![false; part.crop_count];
    for &t in retained {
        hit[part.assignment[t]] = true;
    }
    hit.iter().filter(|&&h| h).count() as f32 / part.crop_count as f32
}

/// Cumulative attention share of tokens sorted by descending attention.
pub fn attention_cdf(attention: &[f32]) -> Result<Vec<f32>> {
    let mut sorted: Vec<f64> = attention.iter().map(|&a| f64::from(a)).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroAttention);
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f32> = sorted
        .iter()
        .map(|&a| {
            acc += a;
            (acc / total) as f32
        })
        .collect();
    // the last entry is exactly the total
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Ok(cdf)
}

/// Share of planted tokens that survived pruning.
pub fn recall(planted: &[usize], retained: &[usize]) -> f32 {
    if planted.is_empty() {
        return 1.0;
    }
    let hits = planted.iter().filter(|p| retained.binary_search(p).is_ok()).count();
    hits as f32 / planted.len() as f32
}

/// Share of the top `top_fraction` attention tokens lying within `end_fraction`
/// of either end of the sequence.
pub fn end_concentration(attention: &[f32], top_fraction: f64, end_fraction: f64) -> f32 {
    let n = attention.len();
    let top = ((top_fraction * n as f64).round() as usize).clamp(1, n);
    let edge = (end_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rank_order(attention, a, b));
    let at_ends = order[..top].iter().filter(|&&i| i < edge || i >= n - edge).count();
    at_ends as f32 / top as f32
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::model::PartitionMode;
    use crate::partition::partition_with;

    fn unit(rows: ndarray::Array2<f32>) -> TokenSet {
        let n = rows.nrows();
        TokenSet {
            embeddings: rows,
            attention: vec![1.0; n],
            grid_h: 1,
            grid_w: n,
            normalized: true,
        }
    }

    #[test]
    fn redundancy_cases() {
        let same = unit(array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        assert!((redundancy_metric(&same, &[0, 1, 2]).unwrap() - 1.0).abs() < 1e-6);
        let ortho = unit(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(redundancy_metric(&ortho, &[0, 1, 2]).unwrap(), 0.0);
        let known = unit(array![[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]);
        assert!((redundancy_metric(&known, &[0, 1, 2]).unwrap() - 1.4 / 3.0).abs() < 1e-6);
        assert!(matches!(redundancy_metric(&known, &[1]), Err(Error::TooFewRetained)));
    }

    #[test]
    fn coverage_counts_crops() {
        let part = partition_with(16, 4, 4, 4, PartitionMode::GridTiles).unwrap();
        assert_eq!(spatial_coverage(&part, &[0, 1, 4, 5]), 0.25);
        assert_eq!(spatial_coverage(&part, &[0, 2, 8, 10]), 1.0);
    }

    #[test]
    fn cdf_shapes() {
        let u = attention_cdf(&[1.0; 5]).unwrap();
        for (got, want) in u.iter().zip([0.2, 0.4, 0.6, 0.8, 1.0]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert_eq!(attention_cdf(&[0.0, 3.0, 0.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(matches!(attention_cdf(&[0.0, 0.0]), Err(Error::ZeroAttention)));
    }

    #[test]
    fn recall_counts_hits() {
        assert_eq!(recall(&[1, 5, 9, 12], &[0, 1, 2, 9]), 0.5);
        assert_eq!(recall(&[], &[0]), 1.0);
    }
}
