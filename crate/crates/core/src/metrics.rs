//! Recoverability scores on a 0–100 scale and their aggregation over
//! initializations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub em: f64,
    pub pm: f64,
    pub bleu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n: usize,
    pub em: f64,
    pub pm: f64,
    pub bleu: f64,
    pub em_max: f64,
    pub pm_max: f64,
    pub bleu_max: f64,
}

fn nonempty(target: &[u32]) -> Result<()> {
    if target.is_empty() {
        return Err(Error::InvalidTokens("empty target".into()));
    }
    Ok(())
}

/// Positional matches over the shorter length, as a share of the target.
pub fn exact_match(target: &[u32], pred: &[u32]) -> Result<f64> {
    nonempty(target)?;
    let hits = target.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok((100.0 * hits as f64 / target.len() as f64).min(100.0))
}

/// Longest common prefix as a share of the target.
pub fn prefix_match(target: &[u32], pred: &[u32]) -> Result<f64> {
    nonempty(target)?;
    let run = target.iter().zip(pred).take_while(|(a, b)| a == b).count();
    Ok((100.0 * run as f64 / target.len() as f64).min(100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_order: usize,
    /// Average only over orders the prediction has n-grams for.
    pub effective_order: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_order: 4,
            effective_order: false,
        }
    }
}

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU with exponential smoothing: the `m`-th order with no
/// matches gets precision `1 / (2^m · total)`.
pub fn smoothed_bleu_with(target: &[u32], pred: &[u32], cfg: &BleuConfig) -> Result<f64> {
    nonempty(target)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    let mut smooth = 1.0;
    for n in 1..=cfg.max_order {
        let total = pred.len().saturating_sub(n - 1);
        if total == 0 {
            if cfg.effective_order {
                break;
            }
            // an order without any n-grams contributes a zero precision
            return Ok(0.0);
        }
        let refs = ngram_counts(target, n);
        let correct: usize = ngram_counts(pred, n)
            .into_iter()
            .map(|(g, c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if correct == 0 {
            smooth *= 2.0;
            1.0 / (smooth * total as f64)
        } else {
            correct as f64 / total as f64
        };
        log_sum += p.ln();
        orders += 1;
    }
    let bp = if pred.len() < target.len() {
        (1.0 - target.len() as f64 / pred.len() as f64).exp()
    } else {
        1.0
    };
    Ok((100.0 * bp * (log_sum / orders as f64).exp()).min(100.0))
}

pub fn smoothed_bleu(target: &[u32], pred: &[u32]) -> Result<f64> {
    smoothed_bleu_with(target, pred, &BleuConfig::default())
}

pub fn score(target: &[u32], pred: &[u32]) -> Result<MetricSet> {
    Ok(MetricSet {
        em: exact_match(target, pred)?,
        pm: prefix_match(target, pred)?,
        bleu: smoothed_bleu(target, pred)?,
    })
}

pub fn aggregate(records: &[MetricSet]) -> Result<AggregateMetrics> {
    if records.is_empty() {
        return Err(Error::Mismatch("cannot aggregate zero records".into()));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricSet) -> f64| records.iter().map(f).sum::<f64>() / n;
    let max = |f: fn(&MetricSet) -> f64| records.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(AggregateMetrics {
        n: records.len(),
        em: mean(|m| m.em),
        pm: mean(|m| m.pm),
        bleu: mean(|m| m.bleu),
        em_max: max(|m| m.em),
        pm_max: max(|m| m.pm),
        bleu_max: max(|m| m.bleu),
    })
}
