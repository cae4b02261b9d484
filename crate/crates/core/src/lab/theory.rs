//! Empirical checks of the coverage and semantic-preservation bounds.
//!
//! The coverage bound says a pruned token `x_j` whose best retained match
//! `x_i` has cosine similarity at least `ε`, and whose grid neighbourhood has
//! similarity variance (against `x_i`) at most `δ`, satisfies
//! `‖x_i − x_j‖ ≤ √(2(1−ε))·‖x_j‖ + √δ`.
//!
//! The neighbourhood of a token is its 8-connected grid neighbours.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::metrics::cosine;
use crate::model::{row_norm, TokenSet};
use crate::rng::seeded;

/// Absolute slack allowed on bound comparisons.
pub const BOUND_SLACK: f64 = 1e-5;

fn neighbours(ts: &TokenSet, j: usize) -> impl Iterator<Item = usize> + '_ {
    let (h, w) = (ts.grid_h as i64, ts.grid_w as i64);
    let (r, c) = ((j / ts.grid_w) as i64, (j % ts.grid_w) as i64);
    (-1..=1i64).flat_map(move |dr| {
        (-1..=1i64).filter_map(move |dc| {
            let (nr, nc) = (r + dr, c + dc);
            ((dr, dc) != (0, 0) && (0..h).contains(&nr) && (0..w).contains(&nc)).then(|| (nr * w + nc) as usize)
        })
    })
}

fn context_variance(ts: &TokenSet, anchor: usize, j: usize) -> f64 {
    let sims: Vec<f64> = neighbours(ts, j).map(|k| cosine(ts, anchor, k)).collect();
    if sims.is_empty() {
        return 0.0;
    }
    let mean = sims.iter().sum::<f64>() / sims.len() as f64;
    sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / sims.len() as f64
}

fn distance(ts: &TokenSet, a: usize, b: usize) -> f64 {
    ts.embeddings
        .row(a)
        .iter()
        .zip(ts.embeddings.row(b).iter())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Best retained match of a pruned token and the quantities the bound uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCoverage {
    pub pruned: usize,
    pub surrogate: usize,
    pub cosine: f64,
    pub context_variance: f64,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Pruned tokens meeting both premises whose bound was checked.
    pub checked: usize,
    /// Pruned tokens for which a premise fails; the bound is not asserted for them.
    pub assumption_failures: Vec<TokenCoverage>,
    /// Checked tokens whose distance exceeds the bound.
    pub violations: Vec<TokenCoverage>,
    /// Smallest `bound − distance` over checked tokens.
    pub min_margin: Option<f64>,
}

fn pruned_of(n: usize, retained: &[usize]) -> Vec<usize> {
    let mut keep = vec![false; n];
    for &i in retained {
        keep[i] = true;
    }
    (0..n).filter(|&i| !keep[i]).collect()
}

/// Retained token with the highest cosine similarity to `j` (ties: lower index).
pub fn best_match(ts: &TokenSet, retained: &[usize], j: usize) -> Option<(usize, f64)> {
    retained.iter().fold(None, |best: Option<(usize, f64)>, &i| {
        let s = cosine(ts, i, j);
        match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        }
    })
}

/// Checks the coverage bound for every pruned token.
pub fn check_coverage_lemma(ts: &TokenSet, retained: &[usize], epsilon: f64, delta: f64) -> CoverageReport {
    let mut report = CoverageReport::default();
    for j in pruned_of(ts.len(), retained) {
        let Some((i, cos)) = best_match(ts, retained, j) else {
            continue;
        };
        let var = context_variance(ts, i, j);
        let dist = distance(ts, i, j);
        let bound = (2.0 * (1.0 - epsilon)).max(0.0).sqrt() * row_norm(ts.embeddings.row(j)) + delta.max(0.0).sqrt();
        let entry = TokenCoverage {
            pruned: j,
            surrogate: i,
            cosine: cos,
            context_variance: var,
            distance: dist,
            bound,
        };
        if cos < epsilon || var > delta {
            report.assumption_failures.push(entry);
            continue;
        }
        report.checked += 1;
        let margin = bound - dist;
        report.min_margin = Some(report.min_margin.map_or(margin, |m| m.min(margin)));
        if dist > bound + BOUND_SLACK {
            report.violations.push(entry);
        }
    }
    report
}

/// Realized premise parameters of a pruning: the weakest best-match cosine
/// `ε`, the largest context variance `δ` and the largest token norm `B`.
pub fn realized_premises(ts: &TokenSet, retained: &[usize]) -> (f64, f64, f64) {
    let mut epsilon = 1.0f64;
    let mut delta = 0.0f64;
    for j in pruned_of(ts.len(), retained) {
        if let Some((i, cos)) = best_match(ts, retained, j) {
            epsilon = epsilon.min(cos);
            delta = delta.max(context_variance(ts, i, j));
        }
    }
    let bound_b = ts.embeddings.rows().into_iter().map(row_norm).fold(0.0f64, f64::max);
    (epsilon, delta, bound_b)
}

/// A one-layer map `x ↦ ReLU(W x)` with `‖W‖₂` pinned to a target Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzLayer {
    /// `out × d`.
    pub weight: Array2<f64>,
}

impl LipschitzLayer {
    /// Gaussian weights rescaled so the spectral norm equals `lipschitz`.
    pub fn random(d: usize, out: usize, lipschitz: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let raw = Array2::from_shape_simple_fn((out, d), || rng.sample::<f64, _>(StandardNormal));
        let sigma = spectral_norm(&raw);
        LipschitzLayer {
            weight: raw.mapv(|w| w * lipschitz / sigma),
        }
    }

    /// Spectral norm of the weight, an upper bound on the layer's Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        spectral_norm(&self.weight)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .rows()
            .into_iter()
            .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().max(0.0))
            .collect()
    }

    /// Mean of the layer output over `rows` of `ts`.
    fn pooled(&self, ts: &TokenSet, rows: impl Iterator<Item = usize>) -> Vec<f64> {
        let mut acc = vec![0.0; self.weight.nrows()];
        let mut count = 0usize;
        for t in rows {
            let x: Vec<f64> = ts.embeddings.row(t).iter().map(|&v| f64::from(v)).collect();
            for (a, y) in acc.iter_mut().zip(self.apply(&x)) {
                *a += y;
            }
            count += 1;
        }
        acc.iter().map(|a| a / count.max(1) as f64).collect()
    }
}

fn spectral_norm(w: &Array2<f64>) -> f64 {
    let (r, c) = w.dim();
    let m = DMatrix::from_row_iterator(r, c, w.iter().copied());
    m.singular_values().max()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticParams {
    pub lipschitz: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Scoring threshold `γ`.
    pub gamma: f64,
    /// Norm bound `B`.
    pub bound_b: f64,
    /// Constant `C_η` of the residual term `C_η·B²/γ`.
    pub c_eta: f64,
}

pub const DEFAULT_C_ETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compares the pooled output drift of pruning against the semantic bound.
///
/// The pruned input feeds every pruned position with its best retained
/// match, so `lhs = ‖mean_t f(x_t) − mean_t f(s(x_t))‖` where `s` is the
/// identity on retained tokens. The bound is
/// `L·(√(2(1−ε))·B + √δ) + C_η·B²/γ`.
pub fn check_semantic_preservation(
    ts: &TokenSet,
    retained: &[usize],
    layer: &LipschitzLayer,
    params: &SemanticParams,
) -> SemanticReport {
    let surrogate: Vec<usize> = (0..ts.len())
        .map(|t| {
            if retained.binary_search(&t).is_ok() {
                t
            } else {
                best_match(ts, retained, t).map_or(t, |(i, _)| i)
            }
        })
        .collect();
    let full = layer.pooled(ts, 0..ts.len());
    let pruned = layer.pooled(ts, surrogate.into_iter());
    let lhs = full
        .iter()
        .zip(&pruned)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let geometric = (2.0 * (1.0 - params.epsilon)).max(0.0).sqrt() * params.bound_b + params.delta.max(0.0).sqrt();
    let residual = if params.gamma > 0.0 {
        params.c_eta * params.bound_b * params.bound_b / params.gamma
    } else {
        f64::INFINITY
    };
    let rhs = params.lipschitz * geometric + residual;
    SemanticReport {
        lhs,
        rhs,
        holds: lhs <= rhs + BOUND_SLACK,
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn set(rows: Array2<f32>, h: usize, w: usize) -> TokenSet {
        let n = rows.nrows();
        TokenSet {
            embeddings: rows,
            attention: vec![1.0; n],
            grid_h: h,
            grid_w: w,
            normalized: true,
        }
    }

    #[test]
    fn identical_twin_has_zero_distance() {
        let ts = set(array![[1.0, 0.0], [1.0, 0.0]], 1, 2);
        let r = check_coverage_lemma(&ts, &[0], 1.0, 0.0);
        assert_eq!(r.checked, 1);
        assert!(r.violations.is_empty());
        assert!(r.min_margin.unwrap().abs() < 1e-9);
    }

    #[test]
    fn saturating_cosine() {
        let eps: f64 = 0.6;
        let ts = set(array![[1.0, 0.0], [0.6, 0.8]], 1, 2);
        let r = check_coverage_lemma(&ts, &[0], eps, 0.0);
        assert_eq!(r.checked, 1);
        assert!(r.violations.is_empty());
        assert!(r.min_margin.unwrap().abs() < 1e-5);
        // law of cosines on unit vectors: ‖x_i − x_j‖ = √(2(1 − 0.6))
        let d = distance(&ts, 0, 1);
        assert!((d - (2.0 * (1.0 - eps)).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn premise_failure_is_reported_separately() {
        let ts = set(array![[1.0, 0.0], [0.0, 1.0]], 1, 2);
        let r = check_coverage_lemma(&ts, &[0], 0.5, 0.0);
        assert_eq!(r.checked, 0);
        assert_eq!(r.assumption_failures.len(), 1);
    }

    #[test]
    fn neighbourhood_is_eight_connected() {
        let ts = set(Array2::ones((9, 2)), 3, 3);
        assert_eq!(neighbours(&ts, 4).count(), 8);
        assert_eq!(neighbours(&ts, 0).collect::<Vec<_>>(), vec![1, 3, 4]);
    }

    #[test]
    fn clipped_layer_has_requested_norm() {
        let layer = LipschitzLayer::random(8, 5, 2.5, 1);
        assert!((layer.lipschitz() - 2.5).abs() < 1e-9);
    }

    #[test]
    fn keeping_everything_costs_nothing() {
        let ts = set(array![[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]], 1, 3);
        let layer = LipschitzLayer::random(2, 4, 1.0, 9);
        let params = SemanticParams {
            lipschitz: 1.0,
            epsilon: 1.0,
            delta: 0.0,
            gamma: 1.0,
            bound_b: 1.0,
            c_eta: DEFAULT_C_ETA,
        };
        let r = check_semantic_preservation(&ts, &[0, 1, 2], &layer, &params);
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds);
    }
}
