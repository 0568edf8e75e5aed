use hdp::attention_ref::{
    exact_attention, masked_softmax, softmax_in_place, topk_block_prune, topk_keep_count, AttentionConfig,
    PrunedLogit,
};
use hdp::fxp::FxpFormat;
use hdp::hdp::BlockMask;
use hdp::tensorio::{gen_synthetic, Distribution, RealMatrix};
use proptest::prelude::*;

fn random_scores(l: usize, seed: u64) -> RealMatrix {
    let m = gen_synthetic(l, l, Distribution::Gaussian { mean: 0.0, std: 3.0 }, seed, FxpFormat::Q8_8).unwrap();
    m.to_reals()
}

#[test]
fn dense_oracle_four_by_four_two_heads() {
    let fmt = FxpFormat::Q8_8;
    let dist = Distribution::Gaussian { mean: 0.0, std: 1.5 };
    let (q, k, v) = (
        gen_synthetic(4, 4, dist, 1, fmt).unwrap(),
        gen_synthetic(4, 4, dist, 2, fmt).unwrap(),
        gen_synthetic(4, 4, dist, 3, fmt).unwrap(),
    );
    let cfg = AttentionConfig::new(4, 4, 2, fmt).unwrap();
    let got = exact_attention(&q, &k, &v, &cfg).unwrap();
    let (q, k, v) = (q.to_reals(), k.to_reals(), v.to_reals());
    // Written out per head with explicit loops.
    for h in 0..2 {
        let off = 2 * h;
        for i in 0..4 {
            let s: Vec<f64> = (0..4)
                .map(|j| (q.get(i, off) * k.get(j, off) + q.get(i, off + 1) * k.get(j, off + 1)) / 2f64.sqrt())
                .collect();
            let m = s.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..2 {
                let want: f64 = (0..4).map(|j| e[j] / z * v.get(j, off + c)).sum();
                assert!((got.get(i, off + c) - want).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn topk_matches_sort_oracle(seed in any::<u64>(), kf in prop::sample::select(vec![0.25, 0.5, 0.75, 1.0])) {
        let s = random_scores(8, seed);
        let mask = topk_block_prune(&s, kf).unwrap();
        let keep = topk_keep_count(4, kf);
        for bi in 0..4 {
            let mut imp: Vec<(f64, usize)> = (0..4)
                .map(|bj| {
                    let t = s.get(2 * bi, 2 * bj).abs() + s.get(2 * bi, 2 * bj + 1).abs()
                        + s.get(2 * bi + 1, 2 * bj).abs() + s.get(2 * bi + 1, 2 * bj + 1).abs();
                    (t, bj)
                })
                .collect();
            imp.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<bool> = (0..4).map(|bj| imp[..keep].iter().any(|x| x.1 == bj)).collect();
            prop_assert_eq!(mask.row(bi), &want[..]);
            prop_assert_eq!(mask.row_kept(bi), keep);
        }
    }

    #[test]
    fn topk_monotone_in_keep_fraction(seed in any::<u64>(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s = random_scores(16, seed);
        prop_assert!(topk_block_prune(&s, lo).unwrap().is_subset_of(&topk_block_prune(&s, hi).unwrap()));
    }

    #[test]
    fn masked_softmax_matches_index_set_oracle(seed in any::<u64>(), bits in prop::collection::vec(any::<bool>(), 16)) {
        let s = random_scores(8, seed);
        let mask = BlockMask::from_bits(4, bits).unwrap();
        let p = masked_softmax(&s, &mask, PrunedLogit::Exclude).unwrap();
        for r in 0..8 {
            let live: Vec<usize> = (0..8).filter(|&c| mask.keeps_entry(r, c)).collect();
            let z: f64 = live.iter().map(|&c| s.get(r, c).exp()).sum();
            for c in 0..8 {
                let want = if live.contains(&c) { s.get(r, c).exp() / z } else { 0.0 };
                prop_assert!((p.get(r, c) - want).abs() < 1e-9);
            }
            let sum: f64 = p.row(r).iter().sum();
            let want = if live.is_empty() { 0.0 } else { 1.0 };
            prop_assert!((sum - want).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_shift_invariant(row in prop::collection::vec(-20.0f64..20.0, 1..64), shift in -50.0f64..50.0) {
        let mut a = row.clone();
        let mut b: Vec<f64> = row.iter().map(|x| x + shift).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn all_ones_mask_is_exact_attention() {
    let fmt = FxpFormat::Q8_8;
    let dist = Distribution::Gaussian { mean: 0.0, std: 1.0 };
    let (q, k, v) = (
        gen_synthetic(8, 4, dist, 7, fmt).unwrap(),
        gen_synthetic(8, 4, dist, 8, fmt).unwrap(),
        gen_synthetic(8, 4, dist, 9, fmt).unwrap(),
    );
    let cfg = AttentionConfig::new(8, 4, 1, fmt).unwrap();
    let exact = exact_attention(&q, &k, &v, &cfg).unwrap();
    let s = hdp::attention_ref::exact_head_scores(&q, &k, &cfg, 0).unwrap();
    let masked =
        hdp::attention_ref::masked_softmax_attention(&s, &BlockMask::all_kept(4), &v.to_reals(), PrunedLogit::Exclude)
            .unwrap();
    assert!(exact.max_abs_diff(&masked) < 1e-12);
}
