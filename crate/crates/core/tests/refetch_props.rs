mod common;

use common::{int_in, rng, uniform};
use holov::refetch::{
    ffn_memory, ffn_memory_counted, ffn_with_vcr, vcr_delta, vcr_delta_counted, Activation, FfnWeights, OpCount,
};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(r: &mut rand_chacha::ChaCha8Rng, shape: (usize, usize), scale: f32) -> Array2<f32> {
    Array2::from_shape_simple_fn(shape, || scale * r.sample::<f32, _>(StandardNormal))
}

#[test]
fn memory_form_matches_matrix_form() {
    let mut r = rng(31);
    for case in 0..100 {
        let d = int_in(&mut r, 1, 64);
        let hidden = int_in(&mut r, 1, 256);
        let w1 = gaussian(&mut r, (d, hidden), 1.0 / (d as f32).sqrt());
        let w2 = gaussian(&mut r, (d, hidden), 1.0 / (hidden as f32).sqrt());
        let x: Array1<f32> = (0..d).map(|_| r.sample::<f32, _>(StandardNormal)).collect();
        let act = [Activation::Relu, Activation::Silu, Activation::SoftmaxOverScores][case % 3];
        let w = FfnWeights::new(w1.clone(), w2.clone(), act).unwrap();
        // FFN(x) = W2 φ(W1ᵀ x)
        let mut h: Vec<f64> = w1.t().dot(&x).iter().map(|&v| f64::from(v)).collect();
        act.apply(&mut h);
        let h: Array1<f32> = h.into_iter().map(|v| v as f32).collect();
        let want = w2.dot(&h);
        let got = ffn_memory(x.view(), &w).unwrap();
        let scale = want.iter().fold(0f32, |m, v| m.max(v.abs())).max(1e-6);
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() / scale < 1e-5, "case {case}: {g} vs {e}");
        }
    }
}

#[test]
fn mixing_is_affine_in_alpha() {
    let mut r = rng(32);
    for _ in 0..100 {
        let d = int_in(&mut r, 2, 32);
        let w = FfnWeights::new(
            gaussian(&mut r, (d, 48), 0.2),
            gaussian(&mut r, (d, 48), 0.2),
            Activation::Relu,
        )
        .unwrap();
        let entries = int_in(&mut r, 1, 20);
        let z = gaussian(&mut r, (entries, d), 0.3);
        let x: Array1<f32> = (0..d).map(|_| r.sample::<f32, _>(StandardNormal)).collect();
        let f0 = ffn_with_vcr(x.view(), &w, z.view(), 0.0).unwrap();
        let f1 = ffn_with_vcr(x.view(), &w, z.view(), 1.0).unwrap();
        assert_eq!(f0, ffn_memory(x.view(), &w).unwrap());
        assert_eq!(f1, vcr_delta(x.view(), z.view(), Activation::Relu).unwrap());
        let alpha = uniform(&mut r, 0.0, 1.0) as f32;
        let mixed = ffn_with_vcr(x.view(), &w, z.view(), alpha).unwrap();
        for ((m, a), b) in mixed.iter().zip(&f1).zip(&f0) {
            assert!((m - (alpha * a + (1.0 - alpha) * b)).abs() < 1e-6);
        }
    }
}

#[test]
fn refetch_cost_scales_with_evidence_count() {
    let mut r = rng(33);
    for (entries, hidden, d) in [(8, 256, 16), (32, 1024, 8), (1, 11, 3)] {
        let w = FfnWeights::new(
            gaussian(&mut r, (d, hidden), 0.1),
            gaussian(&mut r, (d, hidden), 0.1),
            Activation::Relu,
        )
        .unwrap();
        let z = gaussian(&mut r, (entries, d), 0.1);
        let x = Array1::<f32>::ones(d);
        let (mut ffn_ops, mut vcr_ops) = (OpCount::default(), OpCount::default());
        ffn_memory_counted(x.view(), &w, &mut ffn_ops).unwrap();
        vcr_delta_counted(x.view(), z.view(), Activation::Relu, &mut vcr_ops).unwrap();
        assert_eq!(vcr_ops.multiplies * hidden as u64, ffn_ops.multiplies * entries as u64);
        assert_eq!(vcr_ops.multiplies, 2 * (entries * d) as u64);
    }
}
