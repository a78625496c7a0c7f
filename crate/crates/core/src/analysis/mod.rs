//! Intrinsic dimension, PCA of recovered latents, interpolation, and the
//! real-versus-gibberish comparison, all built on sweep records.

mod interpolate;
mod pca;
mod sweep;
mod tables;

pub use interpolate::{
    interpolate_latents, lambda_grid, token_overlap, InterpolationReport, InterpolationRow,
};
pub use pca::{pca_cumulative_variance, PcaReport};
pub use sweep::{
    build_report, item_seed, run_sweep, select_best_latents, sweep_dimension, sweep_items,
    CellSummary, DimSummary, Failure, ItemKey, ItemResult, SweepMeta, SweepPlan, SweepRecord,
    SweepReport,
};
pub use tables::{cells_csv, dimension_csv, line_plot_svg, recovery_csv, Series};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest dimension whose BLEU-bar strictly exceeds `tau`.
pub fn intrinsic_dimension_from(bleu_bars: &[(usize, f64)], tau: f64) -> Option<usize> {
    bleu_bars
        .iter()
        .filter(|(_, b)| *b > tau)
        .map(|(d, _)| *d)
        .min()
}

pub fn intrinsic_dimension(report: &SweepReport, tau: f64) -> Option<usize> {
    intrinsic_dimension_from(&report.bleu_bars(), tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub d_prime: usize,
    pub real: f64,
    pub gibberish: f64,
    /// `real - gibberish`.
    pub delta: f64,
    pub real_std: f64,
    pub gibberish_std: f64,
    /// `gibberish_std / real_std`; absent when the real spread is zero.
    pub std_ratio: Option<f64>,
    /// `(100 - gibberish) / (100 - real)`; absent when real is perfect.
    pub error_ratio: Option<f64>,
}

pub fn compare_real_vs_gibberish(
    real: &SweepReport,
    gib: &SweepReport,
) -> Result<Vec<ComparisonRow>> {
    let dr: Vec<usize> = real.dims.iter().map(|d| d.d_prime).collect();
    let dg: Vec<usize> = gib.dims.iter().map(|d| d.d_prime).collect();
    if dr != dg {
        return Err(Error::Mismatch(format!(
            "d' lists differ: {dr:?} vs {dg:?}"
        )));
    }
    Ok(real
        .dims
        .iter()
        .zip(&gib.dims)
        .map(|(r, g)| ComparisonRow {
            d_prime: r.d_prime,
            real: r.bleu_bar,
            gibberish: g.bleu_bar,
            delta: r.bleu_bar - g.bleu_bar,
            real_std: r.bleu_std,
            gibberish_std: g.bleu_std,
            std_ratio: (r.bleu_std > 0.0).then(|| g.bleu_std / r.bleu_std),
            error_ratio: (r.bleu_bar < 100.0).then(|| (100.0 - g.bleu_bar) / (100.0 - r.bleu_bar)),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE3: [(usize, f64); 4] = [(192, 35.33), (384, 86.71), (576, 96.58), (768, 98.37)];

    #[test]
    fn published_selection() {
        assert_eq!(intrinsic_dimension_from(&TABLE3, 90.0), Some(576));
        assert_eq!(intrinsic_dimension_from(&TABLE3, 99.0), None);
        assert_eq!(intrinsic_dimension_from(&TABLE3, 0.0), Some(192));
        assert_eq!(intrinsic_dimension_from(&TABLE3, 98.37), None);
    }

    #[test]
    fn selection_is_monotone_in_tau() {
        let rank = |d: Option<usize>| d.unwrap_or(usize::MAX);
        let mut prev = 0;
        for t in 0..=100 {
            let cur = rank(intrinsic_dimension_from(&TABLE3, t as f64));
            assert!(cur >= prev);
            prev = cur;
        }
    }

    fn report(vals: &[(usize, f64)]) -> SweepReport {
        let recs: Vec<SweepRecord> = vals
            .iter()
            .map(|&(dp, b)| SweepRecord {
                d_prime: dp,
                sentence_id: "s".into(),
                genre: "g".into(),
                bin: 0,
                length: 5,
                init: 0,
                seed: 0,
                result: Some(ItemResult {
                    best_loss: 0.0,
                    best_step: 0,
                    steps: 0,
                    stop_reason: crate::encoder::StopReason::MaxSteps,
                    final_lr: 0.0,
                    latent: vec![],
                    recovered: vec![],
                    terminated_by: crate::recovery::Termination::Eos,
                    metrics: crate::metrics::MetricSet {
                        em: b,
                        pm: b,
                        bleu: b,
                    },
                    loss_trace: vec![],
                }),
                error: None,
            })
            .collect();
        build_report(&recs, None).unwrap()
    }

    #[test]
    fn comparison() {
        let a = report(&[(8, 90.0), (16, 100.0)]);
        let same = compare_real_vs_gibberish(&a, &a).unwrap();
        assert!(same.iter().all(|r| r.delta == 0.0));
        let g = report(&[(8, 50.0), (16, 60.0)]);
        let rows = compare_real_vs_gibberish(&a, &g).unwrap();
        assert_eq!(rows[0].delta, 40.0);
        assert_eq!(rows[0].error_ratio, Some(5.0));
        assert_eq!(rows[1].error_ratio, None);
        assert!(compare_real_vs_gibberish(&a, &report(&[(8, 1.0)])).is_err());
    }
}
