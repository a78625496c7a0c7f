//! Sentence recovery: decode from BOS under the frozen model with the latent
//! injected exactly as during encoding.
//!
//! BOS is never a candidate continuation. Ties in the argmax go to the lowest
//! token id.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::injection::{InjectionSpec, LatentState};
use crate::linalg::Real;
use crate::model::{forward_logits, BiasPlan, ModelWeights};
use crate::tokenizer::{BOS, EOS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub max_new_tokens: usize,
    /// 1 selects greedy decoding.
    pub beam_width: usize,
    /// Rank finished beams by mean rather than summed log-probability.
    pub length_norm: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 150,
            beam_width: 1,
            length_norm: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Eos,
    LengthCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// Generated words, without BOS or the closing EOS.
    pub tokens: Vec<u32>,
    pub terminated_by: Termination,
    /// Log-probability of each chosen token, including a closing EOS.
    pub logprobs: Vec<f64>,
}

impl RecoveryResult {
    pub fn total_logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }
}

fn next_logprobs<T: Real, P: BiasPlan<T> + ?Sized>(
    w: &ModelWeights<T>,
    prefix: &[u32],
    plan: &P,
) -> Result<Vec<f64>> {
    let logits = forward_logits(w, prefix, plan)?;
    let row: Vec<f64> = logits
        .row(prefix.len() - 1)
        .iter()
        .map(|v| v.as_f64())
        .collect();
    let lse = crate::linalg::log_sum_exp(&row);
    Ok(row.into_iter().map(|v| v - lse).collect())
}

fn argmax(lp: &[f64]) -> u32 {
    let mut best = None;
    for (id, &v) in lp.iter().enumerate() {
        if id as u32 == BOS {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((id as u32, v)),
        }
    }
    best.map(|(id, _)| id).unwrap_or(EOS)
}

pub fn decode_greedy<T: Real, P: BiasPlan<T> + ?Sized>(
    w: &ModelWeights<T>,
    plan: &P,
    cfg: &DecodeConfig,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    let mut prefix = vec![BOS];
    let mut logprobs = Vec::new();
    while prefix.len() - 1 < cfg.max_new_tokens {
        let lp = next_logprobs(w, &prefix, plan)?;
        let tok = argmax(&lp);
        logprobs.push(lp[tok as usize]);
        if tok == EOS {
            prefix.remove(0);
            return Ok(RecoveryResult {
                tokens: prefix,
                terminated_by: Termination::Eos,
                logprobs,
            });
        }
        prefix.push(tok);
    }
    prefix.remove(0);
    Ok(RecoveryResult {
        tokens: prefix,
        terminated_by: Termination::LengthCap,
        logprobs,
    })
}

#[derive(Clone)]
struct Beam {
    prefix: Vec<u32>,
    logprobs: Vec<f64>,
    score: f64,
}

impl Beam {
    fn rank(&self, length_norm: bool) -> f64 {
        if length_norm {
            self.score / self.logprobs.len().max(1) as f64
        } else {
            self.score
        }
    }
}

/// Beam search with the greedy stop rules. Width 1 reproduces
/// [`decode_greedy`] token for token.
pub fn decode_beam<T: Real, P: BiasPlan<T> + ?Sized>(
    w: &ModelWeights<T>,
    plan: &P,
    cfg: &DecodeConfig,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    let width = cfg.beam_width;
    let mut alive = vec![Beam {
        prefix: vec![BOS],
        logprobs: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<(Beam, Termination)> = Vec::new();
    while !alive.is_empty() {
        // (beam index, token, new score)
        let mut cands: Vec<(usize, u32, f64, f64)> = Vec::new();
        for (bi, b) in alive.iter().enumerate() {
            let lp = next_logprobs(w, &b.prefix, plan)?;
            let mut order: Vec<u32> = (0..lp.len() as u32).filter(|&t| t != BOS).collect();
            order.sort_by(|&a, &b| lp[b as usize].total_cmp(&lp[a as usize]).then(a.cmp(&b)));
            for &t in order.iter().take(width) {
                cands.push((bi, t, b.score + lp[t as usize], lp[t as usize]));
            }
        }
        let rank = |c: &(usize, u32, f64, f64)| {
            if cfg.length_norm {
                c.2 / (alive[c.0].logprobs.len() + 1) as f64
            } else {
                c.2
            }
        };
        cands.sort_by(|a, b| {
            rank(b)
                .total_cmp(&rank(a))
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        let mut next = Vec::new();
        for &(bi, t, score, lp) in cands.iter().take(width) {
            let mut nb = alive[bi].clone();
            nb.logprobs.push(lp);
            nb.score = score;
            if t == EOS {
                finished.push((nb, Termination::Eos));
            } else {
                nb.prefix.push(t);
                if nb.prefix.len() - 1 >= cfg.max_new_tokens {
                    finished.push((nb, Termination::LengthCap));
                } else {
                    next.push(nb);
                }
            }
        }
        alive = next;
        if !cfg.length_norm && !alive.is_empty() {
            // summed log-probabilities only decrease as beams grow
            let best_done = finished
                .iter()
                .map(|(b, _)| b.score)
                .fold(f64::NEG_INFINITY, f64::max);
            let best_alive = alive
                .iter()
                .map(|b| b.score)
                .fold(f64::NEG_INFINITY, f64::max);
            if finished.len() >= width && best_done >= best_alive {
                break;
            }
        }
    }
    let (best, term) = finished
        .into_iter()
        .reduce(|a, b| {
            match b
                .0
                .rank(cfg.length_norm)
                .partial_cmp(&a.0.rank(cfg.length_norm))
            {
                Some(Ordering::Greater) => b,
                _ => a,
            }
        })
        .expect("beam search always finishes at least one beam");
    let mut tokens = best.prefix;
    tokens.remove(0);
    Ok(RecoveryResult {
        tokens,
        terminated_by: term,
        logprobs: best.logprobs,
    })
}

pub fn greedy_recover<T: Real>(
    w: &ModelWeights<T>,
    spec: &InjectionSpec<T>,
    z: &LatentState<T>,
    cfg: &DecodeConfig,
) -> Result<RecoveryResult> {
    decode_greedy(w, &spec.plan(z)?, cfg)
}

pub fn beam_recover<T: Real>(
    w: &ModelWeights<T>,
    spec: &InjectionSpec<T>,
    z: &LatentState<T>,
    cfg: &DecodeConfig,
) -> Result<RecoveryResult> {
    decode_beam(w, &spec.plan(z)?, cfg)
}

/// Greedy for width 1, beam search otherwise.
pub fn recover<T: Real>(
    w: &ModelWeights<T>,
    spec: &InjectionSpec<T>,
    z: &LatentState<T>,
    cfg: &DecodeConfig,
) -> Result<RecoveryResult> {
    if cfg.beam_width == 1 {
        greedy_recover(w, spec, z, cfg)
    } else {
        beam_recover(w, spec, z, cfg)
    }
}

/// Summed log-probability of `sentence` followed by EOS.
pub fn sequence_logprob<T: Real, P: BiasPlan<T> + ?Sized>(
    w: &ModelWeights<T>,
    plan: &P,
    sentence: &[u32],
) -> Result<f64> {
    let (inputs, targets) = crate::model::lm_frame(sentence);
    let logits = forward_logits(w, &inputs, plan)?;
    let mut total = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let row: Vec<f64> = logits.row(t).iter().map(|v| v.as_f64()).collect();
        total += row[y as usize] - crate::linalg::log_sum_exp(&row);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::injection::{InjectionConfig, Locations, Mechanism};
    use crate::linalg::Precision;
    use crate::model::{init_weights, ModelConfig, NoBias};

    fn cfg() -> ModelConfig {
        ModelConfig {
            d: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            vocab_size: 8,
            max_len: 160,
            precision: Precision::F64,
        }
    }

    /// Head that always prefers token 3 and never EOS.
    fn babbler() -> ModelWeights<f64> {
        let mut w = init_weights::<f64>(&cfg(), 0).unwrap();
        w.lnf_g.iter_mut().for_each(|v| *v = 0.0);
        w.lnf_b.iter_mut().for_each(|v| *v = 0.0);
        w.lnf_b[0] = 1.0;
        w.head.iter_mut().for_each(|v| *v = 0.0);
        w.head[3] = 10.0;
        w
    }

    #[test]
    fn length_cap_when_eos_never_wins() {
        let r = decode_greedy(&babbler(), &NoBias, &DecodeConfig::default()).unwrap();
        assert_eq!(r.terminated_by, Termination::LengthCap);
        assert_eq!(r.tokens, vec![3; 150]);
        assert_eq!(r.logprobs.len(), 150);
    }

    #[test]
    fn ties_break_to_lowest_id_and_skip_bos() {
        assert_eq!(argmax(&[0.0, -1.0, 0.5, 0.5, 0.1]), 2);
        assert_eq!(argmax(&[9.0, -1.0, 0.5]), 2);
        let mut w = babbler();
        w.head[3] = 0.0;
        // uniform logits: BOS is skipped, so EOS (id 1) wins
        let r = decode_greedy(&w, &NoBias, &DecodeConfig::default()).unwrap();
        assert_eq!((r.tokens.len(), r.terminated_by), (0, Termination::Eos));
    }

    #[test]
    fn zero_latent_matches_unconditional_decoding_and_width_one_matches_greedy() {
        let w = init_weights::<f64>(&cfg(), 4).unwrap();
        let spec = InjectionSpec::build(
            InjectionConfig::new(Locations::ALL, Mechanism::None, 1, 16),
            &cfg(),
        )
        .unwrap();
        let dc = DecodeConfig {
            max_new_tokens: 20,
            ..DecodeConfig::default()
        };
        let zero = LatentState::zeros(16, 1).unwrap();
        assert_eq!(
            greedy_recover(&w, &spec, &zero, &dc).unwrap(),
            decode_greedy(&w, &NoBias, &dc).unwrap()
        );
        for seed in 0..10 {
            let z = crate::encoder::init_latent::<f64>(
                crate::encoder::InitStrategy::L2Normalized,
                16,
                1,
                16,
                seed,
            )
            .unwrap();
            let z = LatentState::new(z.z.iter().map(|v| v * 8.0).collect(), 16, 1).unwrap();
            let g = greedy_recover(&w, &spec, &z, &dc).unwrap();
            let b = beam_recover(&w, &spec, &z, &dc).unwrap();
            assert_eq!(g, b);
        }
    }

    #[test]
    fn beam_result_logprob_is_consistent() {
        let w = init_weights::<f64>(&cfg(), 4).unwrap();
        let dc = DecodeConfig {
            max_new_tokens: 12,
            beam_width: 3,
            ..DecodeConfig::default()
        };
        let r = decode_beam(&w, &NoBias, &dc).unwrap();
        if r.terminated_by == Termination::Eos {
            let lp = sequence_logprob(&w, &NoBias, &r.tokens).unwrap();
            assert!((lp - r.total_logprob()).abs() < 1e-9);
        }
        assert!(r.tokens.len() <= 12);
    }

    #[test]
    fn all_beams_ending_at_first_step() {
        let mut w = babbler();
        // every continuation is equally likely and EOS is id 1: beams of width 8
        // include EOS at step one
        w.head[3] = 0.0;
        let dc = DecodeConfig {
            max_new_tokens: 1,
            beam_width: 8,
            ..DecodeConfig::default()
        };
        let r = decode_beam(&w, &NoBias, &dc).unwrap();
        assert_eq!(r.tokens, Vec::<u32>::new());
        assert_eq!(r.terminated_by, Termination::Eos);
    }
}
