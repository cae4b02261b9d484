//! Turning holistic scores into per-crop quotas and per-crop top-k picks.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{
    normalize_rows, validate_token_set, CropPartition, PruneConfig, PruneResult, QuotaPlan, ScoreSheet, TokenSet,
};
use crate::partition::make_partition;
use crate::scoring::holistic_scores;

/// Offset inside the log of the allocation objective so empty crops stay finite.
pub const LOG_EPSILON: f64 = 1e-9;

/// Mean holistic score of every crop.
pub fn crop_means(sheet: &ScoreSheet, part: &CropPartition) -> Vec<f64> {
    part.members
        .iter()
        .map(|members| {
            let sum: f64 = members.iter().map(|&t| f64::from(sheet.holistic[t])).sum();
            sum / members.len() as f64
        })
        .collect()
}

/// Normalized crop weights `w_c ∝ mean_c(H)^τ`.
///
/// Negative crop means count as zero. If every mean is zero the weights are
/// uniform. Means are divided by their maximum before exponentiation so that
/// large `τ` neither overflows nor underflows the leader.
pub fn crop_weights(sheet: &ScoreSheet, part: &CropPartition, tau: f32) -> Vec<f32> {
    weights_from_means(&crop_means(sheet, part), tau)
}

pub fn weights_from_means(means: &[f64], tau: f32) -> Vec<f32> {
    let clamped: Vec<f64> = means
        .iter()
        .map(|&m| if m.is_finite() && m > 0.0 { m } else { 0.0 })
        .collect();
    let top = clamped.iter().copied().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return vec![1.0 / means.len() as f32; means.len()];
    }
    let powered: Vec<f64> = clamped.iter().map(|&m| (m / top).powf(f64::from(tau))).collect();
    let total: f64 = powered.iter().sum();
    powered.iter().map(|&p| (p / total) as f32).collect()
}

/// `q_c = floor(w_c · retain_count)`.
pub fn initial_quotas(weights: &[f32], retain_count: usize) -> Vec<usize> {
    weights
        .iter()
        .map(|&w| (f64::from(w.max(0.0)) * retain_count as f64).floor() as usize)
        .collect()
}

/// Repairs `quotas` so they sum to `retain_count` without exceeding any crop.
///
/// Quotas above their crop size are capped first. Any remaining surplus is
/// taken back one token at a time from the lowest-weight crop (ties: higher
/// index). A shortfall is granted one token at a time to the highest-weight
/// crop with spare capacity (ties: lower index).
pub fn redistribute(quotas: &[usize], weights: &[f32], crop_sizes: &[usize], retain_count: usize) -> Result<QuotaPlan> {
    if quotas.len() != crop_sizes.len() || weights.len() != crop_sizes.len() {
        return Err(Error::Shape(format!(
            "{} quotas, {} weights, {} crops",
            quotas.len(),
            weights.len(),
            crop_sizes.len()
        )));
    }
    let available: usize = crop_sizes.iter().sum();
    if retain_count > available {
        return Err(Error::BudgetExceeded {
            budget: retain_count,
            available,
        });
    }

    let mut q: Vec<usize> = quotas.iter().zip(crop_sizes).map(|(&q, &m)| q.min(m)).collect();

    // crop indices, highest weight first, lower index first on ties
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));

    let mut total: usize = q.iter().sum();
    for &c in order.iter().rev() {
        if total <= retain_count {
            break;
        }
        let take = q[c].min(total - retain_count);
        q[c] -= take;
        total -= take;
    }
    for &c in &order {
        if total >= retain_count {
            break;
        }
        let give = (crop_sizes[c] - q[c]).min(retain_count - total);
        q[c] += give;
        total += give;
    }
    debug_assert_eq!(total, retain_count);

    Ok(QuotaPlan {
        quotas: q,
        weights: weights.to_vec(),
    })
}

/// Orders two tokens by descending score, then ascending index.
pub fn rank_order(scores: &[f32], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Keeps the `q_c` best-scoring tokens of every crop.
pub fn select_topk(sheet: &ScoreSheet, part: &CropPartition, plan: &QuotaPlan) -> Result<PruneResult> {
    if plan.quotas.len() != part.crop_count {
        return Err(Error::Shape(format!(
            "plan has {} quotas for {} crops",
            plan.quotas.len(),
            part.crop_count
        )));
    }
    let mut per_crop = Vec::with_capacity(part.crop_count);
    for (members, &quota) in part.members.iter().zip(&plan.quotas) {
        if quota > members.len() {
            return Err(Error::BudgetExceeded {
                budget: quota,
                available: members.len(),
            });
        }
        let mut ranked = members.clone();
        ranked.sort_by(|&a, &b| rank_order(&sheet.holistic, a, b));
        ranked.truncate(quota);
        per_crop.push(ranked);
    }
    let mut retained: Vec<usize> = per_crop.iter().flatten().copied().collect();
    retained.sort_unstable();
    Ok(PruneResult {
        retained,
        per_crop,
        quota_plan: plan.clone(),
        score_sheet: sheet.clone(),
    })
}

/// Runs the full HoloV pipeline on one token set.
///
/// ```
/// use holov::{prune, PruneConfig, TokenSet};
/// use ndarray::Array2;
///
/// let emb = Array2::from_shape_fn((16, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f32 + 0.5);
/// let attn: Vec<f32> = (0..16).map(|i| i as f32 / 16.0).collect();
/// let ts = TokenSet::new(emb, attn, 4, 4).unwrap();
/// let result = prune(&ts, &PruneConfig::new(4).with_crops(4)).unwrap();
/// assert_eq!(result.retained.len(), 4);
/// ```
pub fn prune(ts: &TokenSet, cfg: &PruneConfig) -> Result<PruneResult> {
    validate_token_set(ts).into_result()?;
    cfg.check(ts.len())?;
    let ts = normalize_rows(ts)?;
    let part = make_partition(&ts, cfg)?;
    let sheet = holistic_scores(&ts, &part, cfg.gamma_floor)?;
    let weights = crop_weights(&sheet, &part, cfg.tau);
    let initial = initial_quotas(&weights, cfg.retain_count);
    let plan = redistribute(&initial, &weights, &part.crop_sizes, cfg.retain_count)?;
    select_topk(&sheet, &part, &plan)
}

/// Value of `Σ_p log(ε₀ + Σ_{t ≤ k_p} S_pt)` for an allocation `k`.
pub fn log_allocation_objective(crop_scores: &[Vec<f32>], alloc: &[usize]) -> f64 {
    crop_scores
        .iter()
        .zip(alloc)
        .map(|(scores, &k)| {
            let prefix: f64 = scores[..k].iter().map(|&s| f64::from(s)).sum();
            (LOG_EPSILON + prefix).ln()
        })
        .sum()
}

/// Greedy unit-by-unit maximization of [`log_allocation_objective`].
///
/// Each step grants one more token to the crop with the largest marginal
/// gain (ties: lower index). Used to check the allocation against the
/// brute-force optimum; the production allocator is [`redistribute`].
pub fn greedy_log_allocation(crop_scores: &[Vec<f32>], retain_count: usize) -> Result<Vec<usize>> {
    for scores in crop_scores {
        if scores.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
            return Err(Error::InvalidConfig(
                "crop scores must be finite and non-negative".into(),
            ));
        }
        if scores.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("crop scores must be sorted descending".into()));
        }
    }
    let available: usize = crop_scores.iter().map(Vec::len).sum();
    if retain_count > available {
        return Err(Error::BudgetExceeded {
            budget: retain_count,
            available,
        });
    }
    let mut alloc = vec![0usize; crop_scores.len()];
    let mut prefix = vec![0.0f64; crop_scores.len()];
    for _ in 0..retain_count {
        let mut best: Option<(usize, f64)> = None;
        for (p, scores) in crop_scores.iter().enumerate() {
            let Some(&next) = scores.get(alloc[p]) else {
                continue;
            };
            let gain = (LOG_EPSILON + prefix[p] + f64::from(next)).ln() - (LOG_EPSILON + prefix[p]).ln();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((p, gain));
            }
        }
        let (p, _) = best.expect("capacity checked above");
        prefix[p] += f64::from(crop_scores[p][alloc[p]]);
        alloc[p] += 1;
    }
    Ok(alloc)
}
