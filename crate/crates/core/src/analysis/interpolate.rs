use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::injection::{InjectionSpec, LatentState};
use crate::linalg::Real;
use crate::model::ModelWeights;
use crate::recovery::{greedy_recover, DecodeConfig, Termination};
use crate::tokenizer::{decode_ids, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRow {
    pub lambda: f64,
    pub tokens: Vec<u32>,
    pub text: String,
    pub terminated_by: Termination,
    pub overlap_first: usize,
    pub overlap_second: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub first: Vec<u32>,
    pub second: Vec<u32>,
    pub lambdas: Vec<f64>,
    pub rows: Vec<InterpolationRow>,
}

/// `steps + 1` evenly spaced points from 0 to 1 inclusive.
pub fn lambda_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

/// Clipped unigram overlap: shared tokens counted with multiplicity.
pub fn token_overlap(a: &[u32], b: &[u32]) -> usize {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &t in b {
        *counts.entry(t).or_insert(0) += 1;
    }
    a.iter()
        .filter(|t| match counts.get_mut(t) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        })
        .count()
}

fn check_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::Config(
            "lambda grid must be non-empty and within [0, 1]".into(),
        ));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "lambda grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Greedy decodes along `(1-λ)·z1 + λ·z2` after checking that each endpoint
/// reproduces its own sentence.
#[allow(clippy::too_many_arguments)]
pub fn interpolate_latents<T: Real>(
    w: &ModelWeights<T>,
    spec: &InjectionSpec<T>,
    vocab: &Vocab,
    z1: &LatentState<T>,
    s1: &[u32],
    z2: &LatentState<T>,
    s2: &[u32],
    lambdas: &[f64],
    dec: &DecodeConfig,
) -> Result<InterpolationReport> {
    check_grid(lambdas)?;
    let greedy = DecodeConfig {
        beam_width: 1,
        ..dec.clone()
    };
    for (which, z, s) in [(1, z1, s1), (2, z2, s2)] {
        if greedy_recover(w, spec, z, &greedy)?.tokens != s {
            return Err(Error::EndpointNotRecovered { which });
        }
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let z = LatentState::lerp(z1, z2, lambda)?;
        let out = greedy_recover(w, spec, &z, &greedy)?;
        rows.push(InterpolationRow {
            lambda,
            text: decode_ids(vocab, &out.tokens)?,
            overlap_first: token_overlap(&out.tokens, s1),
            overlap_second: token_overlap(&out.tokens, s2),
            terminated_by: out.terminated_by,
            tokens: out.tokens,
        });
    }
    Ok(InterpolationReport {
        first: s1.to_vec(),
        second: s2.to_vec(),
        lambdas: lambdas.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = lambda_grid(10);
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[10]), (0.0, 1.0));
        assert!(check_grid(&g).is_ok());
        assert!(check_grid(&[0.5, 0.2]).is_err());
        assert!(check_grid(&[1.5]).is_err());
    }

    #[test]
    fn overlap_is_clipped() {
        assert_eq!(token_overlap(&[3, 3, 4], &[3, 5]), 1);
        assert_eq!(token_overlap(&[3, 3, 4], &[4, 3, 3, 3]), 3);
        assert_eq!(token_overlap(&[], &[1]), 0);
    }
}
