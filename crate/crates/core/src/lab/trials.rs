use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{recall, redundancy_metric, spatial_coverage};
use super::synth::{generate_synthetic, SyntheticSpec};
use crate::allocation::prune;
use crate::baselines::{attention_topk_prune, random_prune};
use crate::cost::{flops_reduction, CostParams};
use crate::error::{Error, Result};
use crate::model::{normalize_rows, PruneConfig, TokenSet};
use crate::partition::make_partition;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "holov")]
    Holov,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "attn-topk")]
    AttnTopk,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Holov, Method::Random, Method::AttnTopk];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Holov => "holov",
            Method::Random => "random",
            Method::AttnTopk => "attn-topk",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Retained indices of `ts` under `method`; `cfg.seed` drives the random baseline.
pub fn run_method(ts: &TokenSet, method: Method, cfg: &PruneConfig) -> Result<Vec<usize>> {
    match method {
        Method::Holov => Ok(prune(ts, cfg)?.retained),
        Method::Random => random_prune(ts, cfg.retain_count, cfg.seed),
        Method::AttnTopk => attention_topk_prune(ts, cfg.retain_count),
    }
}

/// Quality metrics of one pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub retain_count: usize,
    pub retain_ratio: f64,
    /// Fraction of crops (under the HoloV partition) holding a retained token.
    pub spatial_coverage: f32,
    pub redundancy: Option<f32>,
    /// Recall of planted tokens, when ground truth is known.
    pub recall: Option<f32>,
    pub flops_reduction: f64,
}

/// Scores `retained` against the partition `cfg` induces on `ts`.
pub fn measure(
    ts: &TokenSet,
    method: Method,
    cfg: &PruneConfig,
    retained: &[usize],
    planted: Option<&[usize]>,
) -> Result<MethodMetrics> {
    let normalized = normalize_rows(ts)?;
    let part = make_partition(&normalized, cfg)?;
    let ratio = 1.0 - retained.len() as f64 / ts.len() as f64;
    let cost = CostParams::default().with_n(ts.len());
    Ok(MethodMetrics {
        method,
        retain_count: retained.len(),
        retain_ratio: retained.len() as f64 / ts.len() as f64,
        spatial_coverage: spatial_coverage(&part, retained),
        redundancy: redundancy_metric(&normalized, retained).ok(),
        recall: planted.map(|p| recall(p, retained)),
        flops_reduction: flops_reduction(&cost, ratio.clamp(0.0, 1.0))?.exact,
    })
}

/// How many tokens to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Count(usize),
    /// Pruning ratio `R`; keeps `round((1 − R)·N_v)`.
    Ratio(f64),
}

impl Budget {
    pub fn resolve(self, n_tokens: usize) -> Result<usize> {
        let count = match self {
            Budget::Count(c) => c,
            Budget::Ratio(r) => {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::InvalidConfig(format!("ratio must lie in [0, 1], got {r}")));
                }
                crate::cost::retained_after(n_tokens, r)
            }
        };
        if count == 0 {
            return Err(Error::EmptyBudget);
        }
        if count > n_tokens {
            return Err(Error::BudgetExceeded {
                budget: count,
                available: n_tokens,
            });
        }
        Ok(count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub trials: usize,
    pub seed: u64,
    pub spec: SyntheticSpec,
    pub methods: Vec<Method>,
    pub budget: Budget,
    pub tau: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub metrics: Vec<MethodMetrics>,
}

/// Share of trials in which HoloV is at least as good as `against`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRates {
    pub against: Method,
    /// HoloV coverage ≥ baseline coverage.
    pub coverage: f64,
    /// HoloV redundancy ≤ baseline redundancy.
    pub redundancy: f64,
    /// HoloV planted recall ≥ baseline recall.
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabReport {
    pub trials: Vec<TrialRecord>,
    pub win_rates: Vec<WinRates>,
}

/// One synthetic trial: draws a token set with `seed` and prunes it with every method.
pub fn run_trial(cfg: &LabConfig, trial: usize) -> Result<TrialRecord> {
    let seed = derive_seed(cfg.seed, trial as u64);
    let (ts, truth) = generate_synthetic(&cfg.spec.with_seed(seed))?;
    let retain = cfg.budget.resolve(ts.len())?;
    let prune_cfg = PruneConfig::new(retain).with_tau(cfg.tau).with_seed(seed);
    let metrics = cfg
        .methods
        .iter()
        .map(|&m| {
            let kept = run_method(&ts, m, &prune_cfg)?;
            measure(&ts, m, &prune_cfg, &kept, Some(&truth.planted))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialRecord { trial, seed, metrics })
}

/// Runs `cfg.trials` independent trials; trial `i` uses `derive_seed(cfg.seed, i)`.
pub fn run_lab(cfg: &LabConfig) -> Result<LabReport> {
    use rayon::prelude::*;

    cfg.spec.validate()?;
    if cfg.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".into()));
    }
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let win_rates = win_rates(&trials);
    Ok(LabReport { trials, win_rates })
}

fn win_rates(trials: &[TrialRecord]) -> Vec<WinRates> {
    let find = |t: &TrialRecord, m: Method| t.metrics.iter().find(|x| x.method == m).cloned();
    let Some(first) = trials.first() else {
        return Vec::new();
    };
    if find(first, Method::Holov).is_none() {
        return Vec::new();
    }
    let total = trials.len() as f64;
    first
        .metrics
        .iter()
        .map(|x| x.method)
        .filter(|&m| m != Method::Holov)
        .map(|against| {
            let (mut cov, mut red, mut rec) = (0usize, 0usize, 0usize);
            for t in trials {
                let (Some(h), Some(b)) = (find(t, Method::Holov), find(t, against)) else {
                    continue;
                };
                cov += usize::from(h.spatial_coverage >= b.spatial_coverage);
                red += usize::from(match (h.redundancy, b.redundancy) {
                    (Some(hr), Some(br)) => hr <= br,
                    _ => false,
                });
                rec += usize::from(h.recall >= b.recall);
            }
            WinRates {
                against,
                coverage: cov as f64 / total,
                redundancy: red as f64 / total,
                recall: rec as f64 / total,
            }
        })
        .collect()
}
