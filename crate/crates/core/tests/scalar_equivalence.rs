mod support;

use hdp::attention_ref::{AttentionConfig, PrunedLogit};
use hdp::fxp::FxpFormat;
use hdp::hdp::{hdp_attention, hdp_attention_head, HeadDecision, PruneParams};
use hdp::tensorio::{gen_synthetic, Distribution, Matrix};
use proptest::prelude::*;
use support::scalar_oracle::scalar_head;

fn check_head(q: &Matrix, k: &Matrix, v: &Matrix, rho: f64, tau: f64, mode: PrunedLogit) -> Result<(), TestCaseError> {
    let (l, d_h) = (q.rows(), q.cols());
    let fmt = q.format();
    let cfg = AttentionConfig::new(l, d_h, 1, fmt).unwrap();
    let params = PruneParams::new(rho, tau).unwrap().with_pruned_logit(mode);
    let got = hdp_attention_head(q, k, v, &params, &cfg).unwrap();
    let want = scalar_head(
        q.raws(),
        k.raws(),
        v.raws(),
        l,
        d_h,
        fmt.total_bits() as u32,
        fmt.frac_bits() as u32,
        rho,
        tau,
        mode == PrunedLogit::Zero,
    );
    prop_assert_eq!(got.output.raws(), &want.out[..]);
    prop_assert_eq!(got.mask.bits(), &want.mask[..]);
    prop_assert_eq!(got.decision == HeadDecision::Keep, want.keep);
    prop_assert_eq!(got.theta_head, want.theta_head);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn head_matches_scalar_model(
        l in prop::sample::select(vec![4usize, 8, 16]),
        d_h in prop::sample::select(vec![2usize, 4, 8]),
        std in 0.3f64..4.0,
        rho in prop::sample::select(vec![-0.5, 0.0, 0.3, 0.7]),
        tau in prop::sample::select(vec![0.0, 20.0, 1e12]),
        zero in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let dist = Distribution::Gaussian { mean: 0.0, std };
        let g = |s: u64| gen_synthetic(l, d_h, dist, s, FxpFormat::Q8_8).unwrap();
        let mode = if zero { PrunedLogit::Zero } else { PrunedLogit::Exclude };
        check_head(&g(seed), &g(seed ^ 1), &g(seed ^ 2), rho, tau, mode)?;
    }

    #[test]
    fn other_formats_match_scalar_model(
        frac in 4u8..=10,
        std in 0.3f64..3.0,
        rho in -0.9f64..0.9,
        seed in any::<u64>(),
    ) {
        let fmt = FxpFormat::new(16, frac).unwrap();
        let dist = Distribution::Gaussian { mean: 0.0, std };
        let g = |s: u64| gen_synthetic(8, 4, dist, s, fmt).unwrap();
        check_head(&g(seed), &g(seed ^ 1), &g(seed ^ 2), rho, 0.0, PrunedLogit::Exclude)?;
    }
}

#[test]
fn eight_by_eight_head_bit_exact() {
    let dist = Distribution::Gaussian { mean: 0.0, std: 2.0 };
    let g = |s| gen_synthetic(8, 8, dist, s, FxpFormat::Q8_8).unwrap();
    check_head(&g(100), &g(101), &g(102), 0.3, 0.0, PrunedLogit::Exclude).unwrap();
}

#[test]
fn two_heads_compose_from_single_heads() {
    let fmt = FxpFormat::Q8_8;
    let dist = Distribution::Gaussian { mean: 0.0, std: 2.0 };
    let (q, k, v) = (
        gen_synthetic(8, 8, dist, 5, fmt).unwrap(),
        gen_synthetic(8, 8, dist, 6, fmt).unwrap(),
        gen_synthetic(8, 8, dist, 7, fmt).unwrap(),
    );
    let cfg = AttentionConfig::new(8, 8, 2, fmt).unwrap();
    let params = PruneParams::new(0.3, 0.0).unwrap();
    let layer = hdp_attention(&q, &k, &v, &params, &cfg).unwrap();
    let mut parts = Vec::new();
    for h in 0..2 {
        let s = |m: &Matrix| m.head(h, 2).unwrap().to_matrix();
        let want = scalar_head(s(&q).raws(), s(&k).raws(), s(&v).raws(), 8, 4, 16, 8, 0.3, 0.0, false);
        parts.push(Matrix::new(8, 4, fmt, want.out).unwrap());
    }
    assert_eq!(layer.output, Matrix::concat_cols(&parts).unwrap());
}
