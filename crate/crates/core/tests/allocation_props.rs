mod common;

use common::{int_in, random_grid, random_mode, random_set, rng, subsets, uniform};
use holov::allocation::{greedy_log_allocation, log_allocation_objective, select_topk};
use holov::partition::partition_with;
use holov::{prune, PartitionMode, PruneConfig, QuotaPlan, ScoreSheet};

#[test]
fn quotas_conserve_budget_on_random_configs() {
    let mut r = rng(3);
    for _ in 0..1000 {
        let (h, w) = random_grid(&mut r, 1024);
        let n = h * w;
        let ts = random_set(&mut r, h, w, 4);
        let retain = int_in(&mut r, 1, n);
        let crops = int_in(&mut r, 1, n.min(64));
        let tau = uniform(&mut r, 0.25, 4.0) as f32;
        let cfg = PruneConfig::new(retain)
            .with_crops(crops)
            .with_tau(tau)
            .with_partition_mode(random_mode(&mut r));
        let res = prune(&ts, &cfg).unwrap();
        let plan = &res.quota_plan;
        assert_eq!(plan.total(), retain);
        for (c, members) in res.per_crop.iter().enumerate() {
            assert_eq!(members.len(), plan.quotas[c]);
        }
        let part = partition_with(n, h, w, crops, cfg.partition_mode).unwrap();
        for (q, m) in plan.quotas.iter().zip(&part.crop_sizes) {
            assert!(q <= m);
        }
        assert_eq!(res.retained.len(), retain);
        assert!(res.retained.windows(2).all(|p| p[0] < p[1]));
    }
}

fn brute_force_best(scores: &[f32], members: &[usize], q: usize) -> Vec<usize> {
    // lexicographically smallest index set among the maximum-sum subsets
    let mut best: Option<(f64, Vec<usize>)> = None;
    for pick in subsets(members.len(), q) {
        let set: Vec<usize> = pick.iter().map(|&i| members[i]).collect();
        let sum: f64 = set.iter().map(|&t| f64::from(scores[t])).sum();
        if best.as_ref().is_none_or(|(b, _)| sum > *b) {
            best = Some((sum, set));
        }
    }
    best.map(|(_, s)| s).unwrap_or_default()
}

#[test]
fn pipeline_topk_matches_brute_force() {
    let mut r = rng(4);
    let mut crops_checked = 0;
    for _ in 0..200 {
        let (h, w) = (int_in(&mut r, 2, 8), int_in(&mut r, 2, 8));
        let n = h * w;
        let ts = random_set(&mut r, h, w, 6);
        let crops = int_in(&mut r, n.div_ceil(12), n);
        let retain = int_in(&mut r, 1, n);
        let cfg = PruneConfig::new(retain).with_crops(crops);
        let res = prune(&ts, &cfg).unwrap();
        let part = partition_with(n, h, w, crops, PartitionMode::GridTiles).unwrap();
        for (c, members) in part.members.iter().enumerate() {
            if members.len() > 12 {
                continue;
            }
            let mut got = res.per_crop[c].clone();
            got.sort_unstable();
            let want = brute_force_best(&res.score_sheet.holistic, members, res.quota_plan.quotas[c]);
            assert_eq!(got, want, "crop {c} of {members:?}");
            crops_checked += 1;
        }
    }
    assert!(crops_checked > 1000);
}

#[test]
fn tied_scores_resolve_to_lower_indices() {
    let mut r = rng(5);
    for _ in 0..200 {
        let n = int_in(&mut r, 1, 12);
        // eighths in [0, 1] force many exact ties with exact sums
        let holistic: Vec<f32> = (0..n).map(|_| int_in(&mut r, 0, 8) as f32 / 8.0).collect();
        let sheet = ScoreSheet {
            variance: vec![0.0; n],
            attention: holistic.clone(),
            gamma: vec![0.0],
            holistic,
        };
        let part = partition_with(n, 1, n, 1, PartitionMode::RowMajorBlocks).unwrap();
        let q = int_in(&mut r, 0, n);
        let plan = QuotaPlan {
            quotas: vec![q],
            weights: vec![1.0],
        };
        let res = select_topk(&sheet, &part, &plan).unwrap();
        assert_eq!(res.retained, brute_force_best(&sheet.holistic, &part.members[0], q));
    }
}

#[test]
fn selections_nest_under_pointwise_larger_quotas() {
    let mut r = rng(6);
    for _ in 0..200 {
        let (h, w) = (int_in(&mut r, 2, 12), int_in(&mut r, 2, 12));
        let n = h * w;
        let ts = random_set(&mut r, h, w, 5);
        let crops = int_in(&mut r, 1, n.min(16));
        let k = int_in(&mut r, 1, n - 1);
        let small = prune(&ts, &PruneConfig::new(k).with_crops(crops)).unwrap();
        let large = prune(&ts, &PruneConfig::new(k + 1).with_crops(crops)).unwrap();
        let grows = small
            .quota_plan
            .quotas
            .iter()
            .zip(&large.quota_plan.quotas)
            .all(|(a, b)| a <= b);
        if !grows {
            continue;
        }
        for (a, b) in small.per_crop.iter().zip(&large.per_crop) {
            assert_eq!(a[..], b[..a.len()]);
        }
    }
}

#[test]
fn full_budget_is_identity() {
    let mut r = rng(7);
    for _ in 0..50 {
        let (h, w) = random_grid(&mut r, 200);
        let ts = random_set(&mut r, h, w, 4);
        let crops = int_in(&mut r, 1, ts.len());
        let res = prune(&ts, &PruneConfig::new(ts.len()).with_crops(crops)).unwrap();
        assert_eq!(res.retained, (0..ts.len()).collect::<Vec<_>>());
    }
}

#[test]
fn prune_is_deterministic() {
    let mut r = rng(8);
    let ts = random_set(&mut r, 24, 24, 16);
    let cfg = PruneConfig::new(64);
    assert_eq!(prune(&ts, &cfg).unwrap(), prune(&ts, &cfg).unwrap());
}

/// Every allocation of `budget` units with `k_p ≤ sizes[p]`.
fn allocations(sizes: &[usize], budget: usize) -> Vec<Vec<usize>> {
    let Some((&first, rest)) = sizes.split_first() else {
        return if budget == 0 { vec![vec![]] } else { vec![] };
    };
    let mut out = Vec::new();
    for k in 0..=first.min(budget) {
        for mut tail in allocations(rest, budget - k) {
            tail.insert(0, k);
            out.push(tail);
        }
    }
    out
}

#[test]
fn greedy_allocation_reaches_the_optimum_bound() {
    let bound = 1.0 - (-1.0f64).exp() - 1e-9;
    let mut shapes: Vec<Vec<usize>> = Vec::new();
    for p in 1..=3u32 {
        for code in 0..4usize.pow(p) {
            shapes.push((0..p).map(|i| code / 4usize.pow(i) % 4 + 1).collect());
        }
    }
    let mut instances = 0;
    for sizes in &shapes {
        let cap: usize = sizes.iter().sum();
        for budget in 0..=cap.min(6) {
            for seed in 0..100u64 {
                let mut r = rng(seed * 1000 + budget as u64);
                let scores: Vec<Vec<f32>> = sizes
                    .iter()
                    .map(|&m| {
                        let mut s: Vec<f32> = (0..m).map(|_| uniform(&mut r, 0.0, 1.0) as f32).collect();
                        s.sort_by(|a, b| b.total_cmp(a));
                        s
                    })
                    .collect();
                let empty = vec![0; sizes.len()];
                let base = log_allocation_objective(&scores, &empty);
                let gain = |k: &[usize]| log_allocation_objective(&scores, k) - base;
                let greedy = gain(&greedy_log_allocation(&scores, budget).unwrap());
                let opt = allocations(sizes, budget)
                    .iter()
                    .map(|k| gain(k))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(greedy >= bound * opt, "{sizes:?} budget {budget}: {greedy} vs {opt}");
                instances += 1;
            }
        }
    }
    assert!(instances > 5000);
}
