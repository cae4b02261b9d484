//! Domain types shared by every stage of the pruning pipeline.

use std::fmt;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row norms for a token set flagged as normalized.
pub const NORM_TOLERANCE: f32 = 1e-5;

/// Visual tokens of one image: an `N_v × d` embedding matrix, the
/// per-token [CLS] attention vector and the patch-grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    pub embeddings: Array2<f32>,
    pub attention: Vec<f32>,
    pub grid_h: usize,
    pub grid_w: usize,
    pub normalized: bool,
}

/// A single invariant violation found by [`validate_token_set`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoTokens,
    NoDimensions,
    AttentionLength {
        expected: usize,
        found: usize,
    },
    GridMismatch {
        grid_h: usize,
        grid_w: usize,
        tokens: usize,
    },
    NonFiniteEmbedding {
        row: usize,
    },
    NonFiniteAttention {
        index: usize,
    },
    NegativeAttention {
        index: usize,
    },
    NotUnitNorm {
        row: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoTokens => write!(f, "empty token set"),
            Violation::NoDimensions => write!(f, "zero embedding dimension"),
            Violation::AttentionLength { expected, found } => {
                write!(f, "attention length {found} != token count {expected}")
            }
            Violation::GridMismatch { grid_h, grid_w, tokens } => {
                write!(f, "grid mismatch: {grid_h}x{grid_w} != {tokens} tokens")
            }
            Violation::NonFiniteEmbedding { row } => {
                write!(f, "non-finite embedding in row {row}")
            }
            Violation::NonFiniteAttention { index } => {
                write!(f, "non-finite attention at index {index}")
            }
            Violation::NegativeAttention { index } => {
                write!(f, "negative attention at index {index}")
            }
            Violation::NotUnitNorm { row } => {
                write!(f, "row {row} flagged normalized but not unit-L2")
            }
        }
    }
}

/// Outcome of [`validate_token_set`]; empty means the set is well formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidTokenSet(
                self.violations.iter().map(ToString::to_string).collect(),
            ))
        }
    }
}

/// Collects every invariant violation of `ts` without mutating it.
pub fn validate_token_set(ts: &TokenSet) -> ValidationReport {
    let mut violations = Vec::new();
    let (n, d) = ts.embeddings.dim();
    if n == 0 {
        violations.push(Violation::NoTokens);
    }
    if d == 0 {
        violations.push(Violation::NoDimensions);
    }
    if ts.attention.len() != n {
        violations.push(Violation::AttentionLength {
            expected: n,
            found: ts.attention.len(),
        });
    }
    if ts.grid_h.checked_mul(ts.grid_w) != Some(n) || ts.grid_h == 0 || ts.grid_w == 0 {
        violations.push(Violation::GridMismatch {
            grid_h: ts.grid_h,
            grid_w: ts.grid_w,
            tokens: n,
        });
    }
    for (row, emb) in ts.embeddings.rows().into_iter().enumerate() {
        if emb.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::NonFiniteEmbedding { row });
        } else if ts.normalized && (row_norm(emb) - 1.0).abs() > f64::from(NORM_TOLERANCE) {
            violations.push(Violation::NotUnitNorm { row });
        }
    }
    for (index, &a) in ts.attention.iter().enumerate() {
        if !a.is_finite() {
            violations.push(Violation::NonFiniteAttention { index });
        } else if a < 0.0 {
            violations.push(Violation::NegativeAttention { index });
        }
    }
    ValidationReport { violations }
}

pub(crate) fn row_norm(row: ArrayView1<'_, f32>) -> f64 {
    row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

impl TokenSet {
    /// Builds a token set and rejects it if any invariant is violated.
    pub fn new(embeddings: Array2<f32>, attention: Vec<f32>, grid_h: usize, grid_w: usize) -> Result<Self> {
        let ts = TokenSet {
            embeddings,
            attention,
            grid_h,
            grid_w,
            normalized: false,
        };
        validate_token_set(&ts).into_result()?;
        Ok(ts)
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Returns a copy whose attention vector is replaced by `attention`.
    pub fn with_attention(&self, attention: Vec<f32>) -> Self {
        TokenSet {
            attention,
            ..self.clone()
        }
    }
}

/// Rescales every embedding row to unit L2 norm.
pub fn normalize_rows(ts: &TokenSet) -> Result<TokenSet> {
    let mut embeddings = ts.embeddings.clone();
    for (row, mut emb) in embeddings.rows_mut().into_iter().enumerate() {
        let norm = row_norm(emb.view());
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateEmbedding { row });
        }
        emb.mapv_inplace(|v| (f64::from(v) / norm) as f32);
    }
    Ok(TokenSet {
        embeddings,
        attention: ts.attention.clone(),
        grid_h: ts.grid_h,
        grid_w: ts.grid_w,
        normalized: true,
    })
}

/// How tokens are grouped into crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Rectangular tiles of the patch grid.
    #[default]
    GridTiles,
    /// Contiguous runs of the token sequence.
    RowMajorBlocks,
}

impl fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMode::GridTiles => "grid_tiles",
            PartitionMode::RowMajorBlocks => "row_major_blocks",
        })
    }
}

/// Pruning configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub retain_count: usize,
    /// Allocation sharpness; larger values concentrate quota on the best crops.
    pub tau: f32,
    /// Explicit crop count. `None` selects `round(1024 / retain_count)`.
    pub crop_count: Option<usize>,
    pub partition_mode: PartitionMode,
    /// Mean variance magnitude below which a crop is scored by attention alone.
    pub gamma_floor: f32,
    /// Used by the baselines and synthetic data; HoloV ignores it.
    pub seed: u64,
}

pub const DEFAULT_TAU: f32 = 1.0;
pub const DEFAULT_GAMMA_FLOOR: f32 = 1e-12;

impl PruneConfig {
    pub fn new(retain_count: usize) -> Self {
        PruneConfig {
            retain_count,
            tau: DEFAULT_TAU,
            crop_count: None,
            partition_mode: PartitionMode::default(),
            gamma_floor: DEFAULT_GAMMA_FLOOR,
            seed: 0,
        }
    }

    pub fn with_tau(mut self, tau: f32) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_crops(mut self, crops: usize) -> Self {
        self.crop_count = Some(crops);
        self
    }

    pub fn with_partition_mode(mut self, mode: PartitionMode) -> Self {
        self.partition_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Crop count actually used for a set of `n_tokens` tokens.
    pub fn effective_crop_count(&self, n_tokens: usize) -> usize {
        match self.crop_count {
            Some(c) => c,
            None => default_crop_count(self.retain_count, n_tokens),
        }
    }

    pub(crate) fn check(&self, n_tokens: usize) -> Result<()> {
        if self.retain_count == 0 {
            return Err(Error::EmptyBudget);
        }
        if self.retain_count > n_tokens {
            return Err(Error::BudgetExceeded {
                budget: self.retain_count,
                available: n_tokens,
            });
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must be finite and positive, got {}",
                self.tau
            )));
        }
        if !(self.gamma_floor.is_finite() && self.gamma_floor >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma_floor must be finite and non-negative, got {}",
                self.gamma_floor
            )));
        }
        if self.crop_count == Some(0) {
            return Err(Error::InvalidConfig("crop count must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// `round(1024 / retain_count)` with halves rounded up, clamped to `[1, n_tokens]`.
pub fn default_crop_count(retain_count: usize, n_tokens: usize) -> usize {
    if retain_count == 0 {
        return n_tokens.max(1);
    }
    // round-half-up of 1024 / r in integers: floor((2 * 1024 + r) / (2 * r))
    let c = (2 * 1024 + retain_count) / (2 * retain_count);
    c.clamp(1, n_tokens.max(1))
}

/// Assignment of token indices to crops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropPartition {
    pub crop_count: usize,
    /// Crop index of every token.
    pub assignment: Vec<usize>,
    pub crop_sizes: Vec<usize>,
    /// Token indices of every crop in ascending order.
    pub members: Vec<Vec<usize>>,
}

impl CropPartition {
    pub(crate) fn from_assignment(crop_count: usize, assignment: Vec<usize>) -> Self {
        let mut members = vec![Vec::new(); crop_count];
        for (token, &crop) in assignment.iter().enumerate() {
            members[crop].push(token);
        }
        let crop_sizes = members.iter().map(Vec::len).collect();
        CropPartition {
            crop_count,
            assignment,
            crop_sizes,
            members,
        }
    }

    pub fn token_count(&self) -> usize {
        self.assignment.len()
    }
}

/// Per-token scores produced by [`crate::scoring::holistic_scores`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSheet {
    pub variance: Vec<f32>,
    pub attention: Vec<f32>,
    pub gamma: Vec<f32>,
    pub holistic: Vec<f32>,
}

/// Retention budget of every crop.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotaPlan {
    pub quotas: Vec<usize>,
    pub weights: Vec<f32>,
}

impl QuotaPlan {
    pub fn total(&self) -> usize {
        self.quotas.iter().sum()
    }
}

/// Output of [`crate::allocation::prune`].
#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    /// Retained global token indices, strictly increasing.
    pub retained: Vec<usize>,
    /// Retained indices of every crop, best score first.
    pub per_crop: Vec<Vec<usize>>,
    pub quota_plan: QuotaPlan,
    pub score_sheet: ScoreSheet,
}
