mod common;

use proptest::prelude::*;

use sentspace::analysis::pca_cumulative_variance;
use sentspace::injection::{
    bias_attention_weights, bias_interleave, bias_none, build_projection, LatentState,
};
use sentspace::metrics::{exact_match, prefix_match, smoothed_bleu};

use common::{bleu_oracle, pca_ratios_oracle};

fn latent(z: Vec<f64>, k: usize) -> LatentState<f64> {
    let n = z.len();
    LatentState::new(z, n, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn projection_rows_sum_to_one(d in 2usize..40, frac in 0.05f64..1.0, seed in any::<u64>()) {
        let cols = ((d as f64 * frac).ceil() as usize).clamp(1, d);
        let p = build_projection::<f64>(d, cols, seed).unwrap();
        for r in 0..d {
            let s: f64 = p.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.row(r).iter().all(|&v| v >= 0.0));
        }
        let unit_rows = (0..d).filter(|&r| p.row(r).iter().filter(|&&v| v == 1.0).count() == 1).count();
        prop_assert!(unit_rows >= cols);
    }

    #[test]
    fn plain_bias_is_linear(
        a in prop::collection::vec(-3.0f64..3.0, 8),
        b in prop::collection::vec(-3.0f64..3.0, 8),
        alpha in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let p = build_projection::<f64>(20, 8, seed).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let lhs = bias_none(&p, &latent(mix, 1)).unwrap();
        let za = bias_none(&p, &latent(a, 1)).unwrap();
        let zb = bias_none(&p, &latent(b, 1)).unwrap();
        for i in 0..20 {
            prop_assert!((lhs[i] - (alpha * za[i] + zb[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn attention_bias_is_a_convex_mix(
        z in prop::collection::vec(-2.0f64..2.0, 12),
        h in prop::collection::vec(-4.0f64..4.0, 16),
        seed in any::<u64>(),
    ) {
        let p = build_projection::<f64>(16, 4, seed).unwrap();
        let lat = latent(z, 3);
        let (out, w) = bias_attention_weights(&p, &lat, &h).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let experts: Vec<Vec<f64>> = (1..=3).map(|t| bias_interleave(&p, &lat, t).unwrap()).collect();
        for i in 0..16 {
            let lo = experts.iter().map(|e| e[i]).fold(f64::INFINITY, f64::min);
            let hi = experts.iter().map(|e| e[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out[i] >= lo - 1e-12 && out[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn bleu_matches_the_oracle(
        t in prop::collection::vec(0u32..5, 1..30),
        p in prop::collection::vec(0u32..5, 0..30),
    ) {
        let got = smoothed_bleu(&t, &p).unwrap();
        prop_assert!((got - bleu_oracle(&t, &p)).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&got));
    }

    #[test]
    fn scores_stay_in_range_and_peak_on_identity(t in prop::collection::vec(0u32..6, 1..20), p in prop::collection::vec(0u32..6, 0..20)) {
        for f in [exact_match, prefix_match] {
            let v = f(&t, &p).unwrap();
            prop_assert!((0.0..=100.0).contains(&v));
            prop_assert_eq!(f(&t, &t).unwrap(), 100.0);
        }
        prop_assert!(prefix_match(&t, &p).unwrap() <= exact_match(&t, &p).unwrap());
    }

    #[test]
    fn pca_agrees_with_jacobi(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 3..9)) {
        let r = pca_cumulative_variance(&rows).unwrap();
        let oracle = pca_ratios_oracle(&rows);
        for (a, b) in r.ratios.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        prop_assert!(r.cumulative.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((r.cumulative.last().unwrap() - 1.0).abs() < 1e-9);
    }
}
