use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenSet;
use crate::rng::{below, seeded};

/// Recipe for a planted-structure token set.
///
/// Tokens belong to spatially coherent clusters (Voronoi cells around
/// random grid sites) and sit near their cluster's centroid. Planted
/// informative tokens point in directions of their own and carry extra
/// saliency. Attention is `base + jitter·U(0,1) + planted + bias·u(t)` with
/// the U-shaped profile `u(t) = exp(−t/λ) + exp(−(1−t)/λ)` over the
/// sequence position `t ∈ [0, 1]`.
///
/// Tokens that draw positional attention also look alike: a non-planted
/// token's direction is `(1 − κ·u(t)/u(0))·centroid + κ·u(t)/u(0)·sink`
/// with one shared sink direction and coupling `κ = sink_coupling`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub grid_h: usize,
    pub grid_w: usize,
    pub d: usize,
    pub cluster_count: usize,
    /// Explicit planted token indices. When empty, `planted_count` indices are drawn from the seed.
    pub planted_informative: Vec<usize>,
    pub planted_count: usize,
    pub positional_bias_strength: f32,
    /// Decay length `λ` of the positional profile, as a fraction of the sequence.
    pub positional_decay: f32,
    /// Pull of high-positional-attention tokens toward a shared sink direction, in `[0, 1]`.
    pub sink_coupling: f32,
    pub noise_sigma: f32,
    pub base_saliency: f32,
    pub saliency_jitter: f32,
    pub planted_saliency: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            grid_h: 24,
            grid_w: 24,
            d: 64,
            cluster_count: 8,
            planted_informative: Vec::new(),
            planted_count: 12,
            positional_bias_strength: 1.0,
            positional_decay: 0.05,
            sink_coupling: 1.0,
            noise_sigma: 0.5,
            base_saliency: 0.1,
            saliency_jitter: 0.05,
            planted_saliency: 1.0,
            seed: 0,
        }
    }
}

/// Labels that come with a synthetic token set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cluster: Vec<usize>,
    /// Sorted planted token indices.
    pub planted: Vec<usize>,
}

impl SyntheticSpec {
    pub fn token_count(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SyntheticSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.token_count();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if n == 0 || self.d == 0 || self.cluster_count == 0 {
            return bad("grid, d and cluster_count must be positive".into());
        }
        if self.cluster_count > n {
            return bad(format!("{} clusters for {n} tokens", self.cluster_count));
        }
        if let Some(&i) = self.planted_informative.iter().find(|&&i| i >= n) {
            return bad(format!("planted index {i} out of range"));
        }
        if self.planted_informative.is_empty() && self.planted_count > n {
            return bad(format!("{} planted tokens for {n} tokens", self.planted_count));
        }
        for (name, v) in [
            ("positional_bias_strength", self.positional_bias_strength),
            ("noise_sigma", self.noise_sigma),
            ("base_saliency", self.base_saliency),
            ("saliency_jitter", self.saliency_jitter),
            ("planted_saliency", self.planted_saliency),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.sink_coupling) {
            return bad("sink_coupling must lie in [0, 1]".into());
        }
        if !(self.positional_decay.is_finite() && self.positional_decay > 0.0) {
            return bad("positional_decay must be positive".into());
        }
        Ok(())
    }
}

/// U-shaped positional saliency profile over `t ∈ [0, 1]`.
pub fn positional_profile(t: f64, decay: f64) -> f64 {
    (-t / decay).exp() + (-(1.0 - t) / decay).exp()
}

fn unit_gaussian<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Draws a token set and its labels from `spec`, reproducibly from `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(TokenSet, GroundTruth)> {
    spec.validate()?;
    let n = spec.token_count();
    let d = spec.d;
    let mut rng = seeded(spec.seed);

    let centroids: Vec<Vec<f64>> = (0..spec.cluster_count).map(|_| unit_gaussian(&mut rng, d)).collect();
    let sink = unit_gaussian(&mut rng, d);
    let sites: Vec<(i64, i64)> = (0..spec.cluster_count)
        .map(|_| {
            let cell = below(&mut rng, n as u64) as usize;
            ((cell / spec.grid_w) as i64, (cell % spec.grid_w) as i64)
        })
        .collect();
    let cluster: Vec<usize> = (0..n)
        .map(|t| {
            let (r, c) = ((t / spec.grid_w) as i64, (t % spec.grid_w) as i64);
            (0..sites.len())
                .min_by_key(|&k| {
                    let (sr, sc) = sites[k];
                    ((r - sr).pow(2) + (c - sc).pow(2), k)
                })
                .expect("at least one cluster")
        })
        .collect();

    let mut planted = if spec.planted_informative.is_empty() {
        crate::rng::sample_indices(rng.random(), n, spec.planted_count)
    } else {
        spec.planted_informative.clone()
    };
    planted.sort_unstable();
    planted.dedup();
    let mut is_planted = vec![false; n];
    for &p in &planted {
        is_planted[p] = true;
    }

    let noise_scale = f64::from(spec.noise_sigma) / (d as f64).sqrt();
    let decay = f64::from(spec.positional_decay);
    let peak = positional_profile(0.0, decay);
    let mut embeddings = Array2::<f32>::zeros((n, d));
    let mut attention = Vec::with_capacity(n);
    for t in 0..n {
        let pos = if n > 1 { t as f64 / (n - 1) as f64 } else { 0.0 };
        let direction = if is_planted[t] {
            unit_gaussian(&mut rng, d)
        } else {
            let pull = f64::from(spec.sink_coupling) * positional_profile(pos, decay) / peak;
            centroids[cluster[t]]
                .iter()
                .zip(&sink)
                .map(|(c, s)| (1.0 - pull) * c + pull * s)
                .collect()
        };
        for (j, &base) in direction.iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            embeddings[[t, j]] = (base + noise_scale * noise) as f32;
        }
        let jitter: f64 = rng.random();
        let mut a = f64::from(spec.base_saliency)
            + f64::from(spec.saliency_jitter) * jitter
            + f64::from(spec.positional_bias_strength) * positional_profile(pos, decay);
        if is_planted[t] {
            a += f64::from(spec.planted_saliency);
        }
        attention.push(a as f32);
    }

    let ts = TokenSet::new(embeddings, attention, spec.grid_h, spec.grid_w)?;
    Ok((ts, GroundTruth { cluster, planted }))
}

/// Attention over `n` tokens where the top `top_fraction` carries `top_mass` of the total.
///
/// The leading `round(top_fraction·n)` tokens share `top_mass` evenly and the
/// rest share the remainder, so the sorted cumulative curve passes through
/// `(top_fraction, top_mass)`.
pub fn two_level_attention(n: usize, top_fraction: f64, top_mass: f64) -> Vec<f32> {
    let top = ((top_fraction * n as f64).round() as usize).clamp(1, n);
    let rest = n - top;
    (0..n)
        .map(|i| {
            if i < top {
                (top_mass / top as f64) as f32
            } else {
                ((1.0 - top_mass) / rest as f64) as f32
            }
        })
        .collect()
}
