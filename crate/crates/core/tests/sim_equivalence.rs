use hdp::attention_ref::{AttentionConfig, PrunedLogit};
use hdp::fxp::FxpFormat;
use hdp::hdp::{hdp_attention, integer_score, PruneParams};
use hdp::sim::{output_error_bounds, simulate_layer, SimCounters, HW_SOFTMAX_TOLERANCE};
use hdp::tensorio::{gen_synthetic, Distribution, Matrix};
use proptest::prelude::*;

const Q88: FxpFormat = FxpFormat::Q8_8;

fn work(c: &SimCounters) -> [u64; 8] {
    [
        c.tile_steps,
        c.macs_integer,
        c.macs_frac1,
        c.macs_frac2,
        c.macs_av_total(),
        c.elems_fetched,
        c.elems_written,
        c.se.importance,
    ]
}

fn layer_inputs(l: usize, d: usize, std: f64, seed: u64) -> (Matrix, Matrix, Matrix) {
    let g = |s| gen_synthetic(l, d, Distribution::Gaussian { mean: 0.0, std }, s, Q88).unwrap();
    (g(seed), g(seed ^ 1), g(seed ^ 2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulator_tracks_pipeline(
        l in prop::sample::select(vec![8usize, 16, 32]),
        d_h in prop::sample::select(vec![8usize, 16]),
        heads in 1usize..=2,
        std in 0.5f64..3.5,
        rho in -0.9f64..0.9,
        tau in prop::sample::select(vec![0.0, 50.0, 1e12]),
        zero in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let d = d_h * heads;
        let (q, k, v) = layer_inputs(l, d, std, seed);
        let cfg = AttentionConfig::new(l, d, heads, Q88).unwrap();
        let mode = if zero { PrunedLogit::Zero } else { PrunedLogit::Exclude };
        let params = PruneParams::new(rho, tau).unwrap().with_pruned_logit(mode);
        let sim = simulate_layer(&q, &k, &v, &params, &cfg).unwrap();
        let hdp = hdp_attention(&q, &k, &v, &params, &cfg).unwrap();
        for (h, (s, p)) in sim.heads.iter().zip(&hdp.heads).enumerate() {
            let slice = |m: &Matrix| m.head(h, heads).unwrap().to_matrix();
            let (qs, ks) = (slice(&q).split(), slice(&k).split());
            prop_assert_eq!(&s.integer_atten, &integer_score(&qs.int, &ks.int).unwrap());
            prop_assert_eq!(&s.mask, &p.mask);
            prop_assert_eq!(s.report.decision, p.decision);
            prop_assert!(s.report.counters.is_conserved());
            prop_assert!(s.report.softmax_max_abs_error <= HW_SOFTMAX_TOLERANCE);
            let c = s.report.counters;
            prop_assert_eq!(c.macs_frac1 + c.macs_frac2, p.stats.macs_frac_executed);
            prop_assert_eq!(c.macs_frac_skipped, p.stats.macs_frac_skipped);
            prop_assert_eq!(c.macs_av_total(), p.stats.macs_av);
            let bounds = output_error_bounds(&slice(&v));
            let (so, po) = (s.output.to_reals(), p.output.to_reals());
            for r in 0..l {
                for col in 0..d_h {
                    prop_assert!((so.get(r, col) - po.get(r, col)).abs() <= bounds[col]);
                }
            }
        }
        prop_assert!(sim.report.total.is_conserved());
    }

    #[test]
    fn work_never_grows_with_thresholds(
        l in prop::sample::select(vec![8usize, 16]),
        std in 0.5f64..3.0,
        seed in any::<u64>(),
    ) {
        let (q, k, v) = layer_inputs(l, 16, std, seed);
        let cfg = AttentionConfig::new(l, 16, 2, Q88).unwrap();
        let run = |rho, tau| simulate_layer(&q, &k, &v, &PruneParams::new(rho, tau).unwrap(), &cfg).unwrap();
        let mut prev: Option<[u64; 8]> = None;
        for rho in [-0.8, -0.3, 0.0, 0.2, 0.5, 0.9] {
            let w = work(&run(rho, 0.0).report.total);
            if let Some(p) = prev {
                prop_assert!(w.iter().zip(&p).all(|(a, b)| a <= b), "rho {}: {:?} > {:?}", rho, w, p);
            }
            prev = Some(w);
        }
        let base = run(0.0, 0.0);
        let mut taus: Vec<f64> = base.report.heads.iter().map(|h| h.theta_head as f64).collect();
        taus.extend([0.0, f64::INFINITY]);
        taus.sort_by(f64::total_cmp);
        let mut prev: Option<[u64; 8]> = None;
        for tau in taus {
            let w = work(&run(0.0, tau).report.total);
            if let Some(p) = prev {
                prop_assert!(w.iter().zip(&p).all(|(a, b)| a <= b), "tau {}: {:?} > {:?}", tau, w, p);
            }
            prev = Some(w);
        }
    }
}
