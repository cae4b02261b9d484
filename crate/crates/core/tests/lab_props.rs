mod common;

use common::{int_in, random_set, rng};
use holov::baselines::random_prune;
use holov::lab::{
    attention_cdf, check_coverage_lemma, check_semantic_preservation, end_concentration, generate_synthetic,
    realized_premises, spatial_coverage, two_level_attention, LipschitzLayer, SemanticParams, SyntheticSpec,
    DEFAULT_C_ETA,
};
use holov::partition::partition_with;
use holov::rng::derive_seed;
use holov::{normalize_rows, prune, PartitionMode, PruneConfig};

#[test]
fn cdf_is_monotone_and_ends_at_one() {
    let mut r = rng(41);
    for _ in 0..100 {
        let w = int_in(&mut r, 1, 30);
        let ts = random_set(&mut r, 5, w, 2);
        let cdf = attention_cdf(&ts.attention).unwrap();
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        assert!((cdf[cdf.len() - 1] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn dispersed_profile_puts_forty_percent_in_top_fifth() {
    let n = 576;
    let att = two_level_attention(n, 0.2, 0.4);
    let cdf = attention_cdf(&att).unwrap();
    let top = (0.2 * n as f64).round() as usize;
    assert!((cdf[top - 1] - 0.4).abs() < 1e-5, "{}", cdf[top - 1]);
}

#[test]
fn strong_bias_concentrates_top_decile_at_ends() {
    let spec = SyntheticSpec {
        positional_bias_strength: 20.0,
        planted_count: 0,
        ..SyntheticSpec::default()
    };
    for seed in 0..20 {
        let (ts, _) = generate_synthetic(&spec.with_seed(seed)).unwrap();
        assert!(end_concentration(&ts.attention, 0.1, 0.1) >= 0.9);
    }
}

#[test]
fn coverage_matches_direct_count() {
    let mut r = rng(42);
    for seed in 0..100 {
        let ts = random_set(&mut r, 12, 12, 2);
        let crops = int_in(&mut r, 1, 36);
        let part = partition_with(144, 12, 12, crops, PartitionMode::GridTiles).unwrap();
        let kept = random_prune(&ts, int_in(&mut r, 1, 144), seed).unwrap();
        let hit = part
            .members
            .iter()
            .filter(|m| m.iter().any(|t| kept.contains(t)))
            .count();
        assert_eq!(spatial_coverage(&part, &kept), hit as f32 / crops as f32);
    }
}

fn clustered(seed: u64) -> holov::TokenSet {
    let spec = SyntheticSpec {
        grid_h: 12,
        grid_w: 12,
        d: 16,
        cluster_count: 4,
        noise_sigma: 0.3,
        planted_count: 4,
        ..SyntheticSpec::default()
    };
    let (ts, _) = generate_synthetic(&spec.with_seed(derive_seed(seed, 0))).unwrap();
    normalize_rows(&ts).unwrap()
}

#[test]
fn coverage_lemma_holds_on_clustered_instances() {
    let mut checked = 0;
    for seed in 0..500 {
        let ts = clustered(seed);
        let kept = prune(&ts, &PruneConfig::new(36)).unwrap().retained;
        let (eps, delta, _) = realized_premises(&ts, &kept);
        let report = check_coverage_lemma(&ts, &kept, eps, delta);
        assert!(report.assumption_failures.is_empty());
        assert!(report.violations.is_empty(), "seed {seed}: {:?}", report.violations);
        checked += report.checked;
        // a stricter premise only shrinks the checked set
        let strict = check_coverage_lemma(&ts, &kept, 0.9, 0.01);
        assert!(strict.violations.is_empty());
    }
    assert_eq!(checked, 500 * (144 - 36));
}

#[test]
fn semantic_bound_holds_for_clipped_layers() {
    for seed in 0..200 {
        let ts = clustered(seed + 10_000);
        let kept = prune(&ts, &PruneConfig::new(48)).unwrap().retained;
        let (epsilon, delta, bound_b) = realized_premises(&ts, &kept);
        let lipschitz = 0.5 + (seed % 4) as f64;
        let layer = LipschitzLayer::random(ts.dim(), 24, lipschitz, seed);
        assert!((layer.lipschitz() - lipschitz).abs() < 1e-9 * lipschitz);
        let params = SemanticParams {
            lipschitz,
            epsilon,
            delta,
            // large γ leaves only the geometric term
            gamma: 1e12,
            bound_b,
            c_eta: DEFAULT_C_ETA,
        };
        let report = check_semantic_preservation(&ts, &kept, &layer, &params);
        assert!(report.holds, "seed {seed}: {report:?}");
        assert!(report.lhs > 0.0);
    }
}
