//! Visual context refetching.
//!
//! An FFN `φ(x·W1)·W2ᵀ` is a key-value memory: the columns of `W1` are keys,
//! the columns of `W2` are values and the output is `Σ_i φ(⟨x, k_i⟩)·v_i`.
//! Refetching appends visual tokens as extra entries that are their own key
//! and value, and mixes the retrieved vector into the FFN output with an
//! injection ratio `α`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Silu,
    /// Softmax across all memory scores of one query.
    SoftmaxOverScores,
}

impl Activation {
    pub fn apply(self, scores: &mut [f64]) {
        match self {
            Activation::Relu => scores.iter_mut().for_each(|s| *s = s.max(0.0)),
            Activation::Silu => scores.iter_mut().for_each(|s| *s /= 1.0 + (-*s).exp()),
            Activation::SoftmaxOverScores => {
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - top).exp();
                    total += *s;
                }
                scores.iter_mut().for_each(|s| *s /= total);
            }
        }
    }
}

/// FFN weights viewed as a memory of `D` key/value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnWeights {
    /// `d × D`, keys as columns.
    pub w1: Array2<f32>,
    /// `d × D`, values as columns.
    pub w2: Array2<f32>,
    pub activation: Activation,
}

impl FfnWeights {
    pub fn new(w1: Array2<f32>, w2: Array2<f32>, activation: Activation) -> Result<Self> {
        if w1.dim() != w2.dim() || w1.ncols() == 0 || w1.nrows() == 0 {
            return Err(Error::Shape(format!("W1 is {:?}, W2 is {:?}", w1.dim(), w2.dim())));
        }
        if w1.iter().chain(w2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite FFN weight".into()));
        }
        Ok(FfnWeights { w1, w2, activation })
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn memory_size(&self) -> usize {
        self.w1.ncols()
    }
}

/// Multiplication counter for the cost comparison between the FFN memory and refetching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub multiplies: u64,
}

/// `Σ_i φ(⟨x, key_i⟩)·value_i` with keys and values as columns.
fn kv_retrieve(
    x: ArrayView1<'_, f32>,
    keys: ArrayView2<'_, f32>,
    values: ArrayView2<'_, f32>,
    activation: Activation,
    ops: &mut OpCount,
) -> Array1<f32> {
    let d = x.len();
    let entries = keys.ncols();
    let mut scores: Vec<f64> = keys
        .columns()
        .into_iter()
        .map(|k| k.iter().zip(x.iter()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum())
        .collect();
    activation.apply(&mut scores);
    let mut out = vec![0.0f64; d];
    for (v, &w) in values.columns().into_iter().zip(&scores) {
        for (o, &vi) in out.iter_mut().zip(v.iter()) {
            *o += w * f64::from(vi);
        }
    }
    ops.multiplies += 2 * (entries * d) as u64;
    out.into_iter().map(|v| v as f32).collect()
}

fn check_query(x: ArrayView1<'_, f32>, d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::Shape(format!("query has {} dims, expected {d}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("non-finite query".into()));
    }
    Ok(())
}

/// FFN output written as a key-value memory lookup.
pub fn ffn_memory(x: ArrayView1<'_, f32>, w: &FfnWeights) -> Result<Array1<f32>> {
    ffn_memory_counted(x, w, &mut OpCount::default())
}

pub fn ffn_memory_counted(x: ArrayView1<'_, f32>, w: &FfnWeights, ops: &mut OpCount) -> Result<Array1<f32>> {
    check_query(x, w.hidden())?;
    Ok(kv_retrieve(x, w.w1.view(), w.w2.view(), w.activation, ops))
}

/// Retrieval from visual tokens (rows of `z_v`) used as both keys and values.
pub fn vcr_delta(x: ArrayView1<'_, f32>, z_v: ArrayView2<'_, f32>, activation: Activation) -> Result<Array1<f32>> {
    vcr_delta_counted(x, z_v, activation, &mut OpCount::default())
}

pub fn vcr_delta_counted(
    x: ArrayView1<'_, f32>,
    z_v: ArrayView2<'_, f32>,
    activation: Activation,
    ops: &mut OpCount,
) -> Result<Array1<f32>> {
    if z_v.nrows() == 0 {
        return Err(Error::NoVisualEvidence);
    }
    check_query(x, z_v.ncols())?;
    let entries = z_v.t();
    Ok(kv_retrieve(x, entries, entries, activation, ops))
}

/// `α·Δ(z_v | x) + (1 − α)·FFN(x)`.
pub fn ffn_with_vcr(
    x: ArrayView1<'_, f32>,
    w: &FfnWeights,
    z_v: ArrayView2<'_, f32>,
    alpha: f32,
) -> Result<Array1<f32>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let ffn = ffn_memory(x, w)?;
    if alpha == 0.0 {
        return Ok(ffn);
    }
    let delta = vcr_delta(x, z_v, w.activation)?;
    if alpha == 1.0 {
        return Ok(delta);
    }
    Ok(delta
        .iter()
        .zip(ffn.iter())
        .map(|(&r, &f)| alpha * r + (1.0 - alpha) * f)
        .collect())
}

/// Normalized Shannon entropy of `softmax(logits)`, in `[0, 1]`.
pub fn normalized_entropy(logits: &[f32]) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::VocabularyTooSmall(logits.len()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite logits".into()));
    }
    let mut p: Vec<f64> = logits.iter().map(|&l| f64::from(l)).collect();
    Activation::SoftmaxOverScores.apply(&mut p);
    let h: f64 = p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum();
    Ok((h / (logits.len() as f64).ln()).clamp(0.0, 1.0))
}

/// Whether the next-token distribution is uncertain enough to refetch.
pub fn uncertainty_trigger(logits: &[f32], threshold: f32) -> Result<bool> {
    Ok(normalized_entropy(logits)? > f64::from(threshold))
}

/// Decoder layer at which refetching is applied: the middle one.
pub fn trigger_layer(num_layers: usize) -> usize {
    num_layers / 2
}

pub const DEFAULT_ALPHA_MAX: f32 = 0.3;
pub const DEFAULT_COMPLEXITY_SCALE: f32 = 0.05;

/// Heuristic injection ratio from image complexity.
///
/// Maps the mean token variance `v ≥ 0` to `α_max·(2σ(v / scale) − 1)`,
/// which is 0 for a uniform image and approaches `α_max` for busy ones.
pub fn alpha_from_complexity(mean_variance: f32, alpha_max: f32, scale: f32) -> f32 {
    let z = f64::from(mean_variance.max(0.0)) / f64::from(scale);
    let squashed = 2.0 / (1.0 + (-z).exp()) - 1.0;
    (f64::from(alpha_max) * squashed) as f32
}

/// Rows of `ts` that were not retained, the evidence reinjected on refetch.
pub fn pruned_evidence(ts: &TokenSet, retained: &[usize]) -> Array2<f32> {
    let mut keep = vec![false; ts.len()];
    for &i in retained {
        keep[i] = true;
    }
    let rows: Vec<usize> = (0..ts.len()).filter(|&i| !keep[i]).collect();
    ts.embeddings.select(ndarray::Axis(0), &rows)
}
