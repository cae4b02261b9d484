//! Analytic FLOPs model for the visual-token part of an LLM decoder.
//!
//! Per layer, prefill costs `a·n²·d + b·n·d² + c·n·d·m` and one decode step
//! against `n` cached tokens costs `b·d² + (b·d + c·d·m)·n`. The constants
//! default to `a = 2` (score and value matmuls), `b = 4` (Q/K/V/O
//! projections) and `c = 6` (three SwiGLU matmuls at 2 FLOPs per MAC); they
//! are modeling conventions and may be overridden.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Visual token count.
    pub n: usize,
    /// Hidden size.
    pub d: usize,
    /// FFN intermediate size.
    pub m: usize,
    pub layers: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for CostParams {
    /// LLaMA-7B geometry with 576 visual tokens.
    fn default() -> Self {
        CostParams {
            n: 576,
            d: 4096,
            m: 11008,
            layers: 32,
            a: 2.0,
            b: 4.0,
            c: 6.0,
        }
    }
}

impl CostParams {
    pub fn with_n(self, n: usize) -> Self {
        CostParams { n, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.layers == 0 {
            return Err(Error::InvalidConfig("d, m and layers must be positive".into()));
        }
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn layer_prefill(&self, n: usize) -> f64 {
        let (n, d, m) = (n as f64, self.d as f64, self.m as f64);
        self.a * n * n * d + self.b * n * d * d + self.c * n * d * m
    }
}

/// Prefill FLOPs of `p.n` visual tokens across all layers.
pub fn prefill_flops(p: &CostParams) -> f64 {
    p.layers as f64 * p.layer_prefill(p.n)
}

/// Decode FLOPs for one generated token attending to `cached_n` cached tokens.
pub fn decode_flops_per_token(p: &CostParams, cached_n: usize) -> f64 {
    let (d, m) = (p.d as f64, p.m as f64);
    p.layers as f64 * (p.b * d * d + (p.b * d + p.c * d * m) * cached_n as f64)
}

/// Tokens kept after removing a fraction `ratio`: `round((1 − ratio)·n)`, halves up.
pub fn retained_after(n: usize, ratio: f64) -> usize {
    ((1.0 - ratio) * n as f64 + 0.5).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsReduction {
    pub n_hat: usize,
    /// Exact prefill reduction `1 − cost(n̂)/cost(n)`.
    pub exact: f64,
    /// Quadratic-dominance approximation `2R − R²`.
    pub approx: f64,
}

/// Prefill FLOPs reduction for pruning ratio `ratio ∈ [0, 1]`.
pub fn flops_reduction(p: &CostParams, ratio: f64) -> Result<FlopsReduction> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("ratio must lie in [0, 1], got {ratio}")));
    }
    let n_hat = retained_after(p.n, ratio);
    let full = p.layer_prefill(p.n);
    let exact = if full == 0.0 {
        0.0
    } else {
        1.0 - p.layer_prefill(n_hat) / full
    };
    Ok(FlopsReduction {
        n_hat,
        exact,
        approx: 2.0 * ratio - ratio * ratio,
    })
}
