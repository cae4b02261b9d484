//! Crop-local token scoring: masked similarity, similarity variance and the
//! fused holistic score `H = γ·V + A`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::{CropPartition, ScoreSheet, TokenSet};

/// Cosine similarity matrix of the tokens in crop `crop`, diagonal zeroed.
///
/// Rows and columns follow the crop's member order (ascending token index).
pub fn intra_crop_similarity(ts: &TokenSet, part: &CropPartition, crop: usize) -> Result<Array2<f32>> {
    if !ts.normalized {
        return Err(Error::NotNormalized);
    }
    let members = part
        .members
        .get(crop)
        .ok_or_else(|| Error::Shape(format!("crop {crop} out of range")))?;
    let m = members.len();
    let mut sim = Array2::<f32>::zeros((m, m));
    for a in 0..m {
        let ra = ts.embeddings.row(members[a]);
        for b in (a + 1)..m {
            let rb = ts.embeddings.row(members[b]);
            let dot: f64 = ra
                .iter()
                .zip(rb.iter())
                .map(|(&x, &y)| f64::from(x) * f64::from(y))
                .sum();
            let dot = dot as f32;
            sim[[a, b]] = dot;
            sim[[b, a]] = dot;
        }
    }
    Ok(sim)
}

/// Per-row variance of the off-diagonal similarities.
///
/// Both the row mean and the variance skip the masked diagonal and use the
/// `M - 1` normalizer. A singleton crop has variance `[0]`.
pub fn token_variance(sim: &Array2<f32>) -> Result<Vec<f32>> {
    let (rows, cols) = sim.dim();
    if rows != cols {
        return Err(Error::Shape(format!(
            "similarity matrix must be square, got {rows}x{cols}"
        )));
    }
    if rows <= 1 {
        return Ok(vec![0.0; rows]);
    }
    let variances = sim
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            // Welford over j != i
            let mut count = 0.0f64;
            let mut mean = 0.0f64;
            let mut m2 = 0.0f64;
            for (j, &s) in row.iter().enumerate() {
                if j == i {
                    continue;
                }
                let s = f64::from(s);
                count += 1.0;
                let delta = s - mean;
                mean += delta / count;
                m2 += delta * (s - mean);
            }
            (m2 / count).max(0.0) as f32
        })
        .collect();
    Ok(variances)
}

/// `γ = mean|A| / mean|V|`, or 0 when `mean|V|` falls below `gamma_floor`.
pub fn adaptive_gamma(variance: &[f32], attention: &[f32], gamma_floor: f32) -> f32 {
    if variance.is_empty() {
        return 0.0;
    }
    let mean_abs = |xs: &[f32]| xs.iter().map(|&x| f64::from(x).abs()).sum::<f64>() / xs.len() as f64;
    let v = mean_abs(variance);
    if v < f64::from(gamma_floor) || v == 0.0 {
        return 0.0;
    }
    (mean_abs(attention) / v) as f32
}

/// Scores every token of a normalized token set crop by crop.
pub fn holistic_scores(ts: &TokenSet, part: &CropPartition, gamma_floor: f32) -> Result<ScoreSheet> {
    if !ts.normalized {
        return Err(Error::NotNormalized);
    }
    if part.token_count() != ts.len() {
        return Err(Error::Shape(format!(
            "partition covers {} tokens, token set has {}",
            part.token_count(),
            ts.len()
        )));
    }
    let n = ts.len();
    let mut variance = vec![0.0f32; n];
    let mut holistic = vec![0.0f32; n];
    let mut gamma = Vec::with_capacity(part.crop_count);
    for (crop, members) in part.members.iter().enumerate() {
        let sim = intra_crop_similarity(ts, part, crop)?;
        let v = token_variance(&sim)?;
        let a: Vec<f32> = members.iter().map(|&t| ts.attention[t]).collect();
        let g = adaptive_gamma(&v, &a, gamma_floor);
        for ((&t, &vi), &ai) in members.iter().zip(&v).zip(&a) {
            variance[t] = vi;
            holistic[t] = fuse(g, vi, ai);
        }
        gamma.push(g);
    }
    Ok(ScoreSheet {
        variance,
        attention: ts.attention.clone(),
        gamma,
        holistic,
    })
}

/// The fused score; kept as one expression so callers can reproduce it bit for bit.
#[inline]
pub fn fuse(gamma: f32, variance: f32, attention: f32) -> f32 {
    gamma * variance + attention
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::model::normalize_rows;
    use crate::model::PartitionMode;
    use crate::partition::partition_with;

    fn unit_set(rows: Array2<f32>) -> TokenSet {
        let n = rows.nrows();
        TokenSet {
            embeddings: rows,
            attention: vec![0.1; n],
            grid_h: 1,
            grid_w: n,
            normalized: true,
        }
    }

    fn one_crop(n: usize) -> CropPartition {
        partition_with(n, 1, n, 1, PartitionMode::RowMajorBlocks).unwrap()
    }

    #[test]
    fn identical_pair() {
        let ts = unit_set(array![[1.0, 0.0], [1.0, 0.0]]);
        let s = intra_crop_similarity(&ts, &one_crop(2), 0).unwrap();
        assert_eq!(s, array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn orthogonal_pair() {
        let ts = unit_set(array![[1.0, 0.0], [0.0, 1.0]]);
        let s = intra_crop_similarity(&ts, &one_crop(2), 0).unwrap();
        assert_eq!(s, Array2::<f32>::zeros((2, 2)));
    }

    #[test]
    fn three_token_crop_matches_pairwise_cosines() {
        let ts = unit_set(array![[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]);
        let s = intra_crop_similarity(&ts, &one_crop(3), 0).unwrap();
        // brute-force cosine oracle
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b {
                    0.0
                } else {
                    let (x, y) = (ts.embeddings.row(a), ts.embeddings.row(b));
                    x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt())
                };
                assert!((s[[a, b]] - expect).abs() < 1e-6);
            }
        }
        assert!((s[[0, 1]] - 0.6).abs() < 1e-7);
        assert_eq!(s[[0, 2]], 0.0);
        assert!((s[[1, 2]] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn unnormalized_rejected() {
        let mut ts = unit_set(array![[1.0, 0.0]]);
        ts.normalized = false;
        assert!(matches!(
            intra_crop_similarity(&ts, &one_crop(1), 0),
            Err(Error::NotNormalized)
        ));
    }

    #[test]
    fn constant_rows_have_zero_variance() {
        let s = array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        assert_eq!(token_variance(&s).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn variance_of_point_six_and_zero() {
        let s = array![[0.0, 0.6, 0.0], [0.6, 0.0, 0.8], [0.0, 0.8, 0.0]];
        let v = token_variance(&s).unwrap();
        // mean 0.3, ((0.3)^2 + (0.3)^2) / (M - 1) with M = 3
        assert!((v[0] - 0.09).abs() < 1e-7);
        // row 1: [0.6, 0.8], mean 0.7, var 0.01
        assert!((v[1] - 0.01).abs() < 1e-7);
    }

    #[test]
    fn singleton_variance() {
        assert_eq!(token_variance(&array![[0.0f32]]).unwrap(), vec![0.0]);
    }

    #[test]
    fn gamma_ratio() {
        assert!((adaptive_gamma(&[0.1, 0.1], &[0.1, 0.3], 1e-12) - 2.0).abs() < 1e-6);
        assert_eq!(adaptive_gamma(&[0.0, 0.0], &[0.1, 0.3], 1e-12), 0.0);
        assert_eq!(adaptive_gamma(&[0.05, 0.15], &[0.0, 0.0], 1e-12), 0.0);
    }

    #[test]
    fn fused_score_example() {
        assert!((fuse(2.0, 0.18, 0.05) - 0.41).abs() < 1e-7);
    }

    #[test]
    fn identical_tokens_score_attention_only() {
        let ts = normalize_rows(&TokenSet {
            embeddings: array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0]],
            attention: vec![0.4, 0.1, 0.3, 0.2],
            grid_h: 2,
            grid_w: 2,
            normalized: false,
        })
        .unwrap();
        let sheet = holistic_scores(&ts, &one_crop(4), 1e-12).unwrap();
        assert_eq!(sheet.gamma, vec![0.0]);
        assert_eq!(sheet.holistic, ts.attention);
    }
}
