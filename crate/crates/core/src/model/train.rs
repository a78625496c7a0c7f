//! Next-token training of the toy language model with Adam over all weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Real;
use crate::optim::{Adam, AdamConfig};
use crate::tokenizer::TokenSeq;

use super::backward::{backward, cross_entropy_backward, NoSites};
use super::{forward_traced, init_weights, lm_frame, ModelConfig, ModelWeights, NoBias};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Every n-th sentence is held out for evaluation.
    pub heldout_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 6,
            lr: 3e-3,
            batch_size: 16,
            warmup_steps: 50,
            grad_clip: 1.0,
            heldout_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub initial_heldout_loss: f64,
    pub final_heldout_loss: f64,
    pub epoch_train_loss: Vec<f64>,
}

/// Token-weighted mean next-token cross entropy over `sentences`.
pub fn heldout_loss<T: Real>(w: &ModelWeights<T>, sentences: &[&TokenSeq]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in sentences {
        let (inputs, targets) = lm_frame(s.ids());
        let tr = forward_traced(w, &inputs, &NoBias)?;
        let mut dl = vec![T::zero(); tr.logits.len()];
        let loss = cross_entropy_backward(&tr.logits, &targets, w.config.vocab_size, &mut dl);
        total += loss.as_f64() * targets.len() as f64;
        count += targets.len();
    }
    Ok(if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    })
}

pub fn train_toy_lm<T: Real>(
    corpus: &[TokenSeq],
    cfg: &ModelConfig,
    train: &TrainConfig,
) -> Result<(ModelWeights<T>, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut w = init_weights::<T>(cfg, train.seed)?;
    let every = train.heldout_every.max(2);
    let (mut fit, mut held): (Vec<&TokenSeq>, Vec<&TokenSeq>) = (Vec::new(), Vec::new());
    for (i, s) in corpus.iter().enumerate() {
        s.check_vocab(cfg.vocab_size)?;
        if s.len() + 1 > cfg.max_len {
            return Err(Error::SequenceTooLong {
                len: s.len() + 1,
                max_len: cfg.max_len,
            });
        }
        if corpus.len() > 1 && i % every == every - 1 {
            held.push(s);
        } else {
            fit.push(s);
        }
    }
    if held.is_empty() {
        held = fit.clone();
    }
    let initial = heldout_loss(&w, &held)?;
    let mut report = TrainReport {
        steps: 0,
        initial_heldout_loss: initial,
        final_heldout_loss: initial,
        epoch_train_loss: Vec::new(),
    };
    if train.epochs == 0 {
        return Ok((w, report));
    }

    let sizes: Vec<usize> = w.tensors().iter().map(|t| t.len()).collect();
    let mut adam = Adam::<T>::new(&sizes, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x5eed_7a11);
    let batch = train.batch_size.max(1);
    let total_steps = train.epochs * fit.len().div_ceil(batch);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut grads = ModelWeights::<T>::zeros(cfg);

    for _epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(batch) {
            for g in grads.tensors_mut() {
                g.iter_mut().for_each(|v| *v = T::zero());
            }
            let n_tokens: usize = chunk.iter().map(|&i| fit[i].len() + 1).sum();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (inputs, targets) = lm_frame(fit[i].ids());
                let tr = forward_traced(&w, &inputs, &NoBias)?;
                let mut dl = vec![T::zero(); tr.logits.len()];
                let loss = cross_entropy_backward(&tr.logits, &targets, cfg.vocab_size, &mut dl);
                // per-sentence mean → token-weighted batch mean
                let weight = T::lit(targets.len() as f64 / n_tokens as f64);
                dl.iter_mut().for_each(|v| *v *= weight);
                backward(&w, &tr, &dl, Some(&mut grads), &mut NoSites);
                batch_loss += loss.as_f64() * targets.len() as f64;
            }
            let step = report.steps;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            epoch_tokens += n_tokens;

            if train.grad_clip > 0.0 {
                let norm: f64 = grads
                    .tensors()
                    .iter()
                    .flat_map(|t| t.iter())
                    .map(|v| v.as_f64() * v.as_f64())
                    .sum::<f64>()
                    .sqrt();
                if norm > train.grad_clip {
                    let s = T::lit(train.grad_clip / norm);
                    for g in grads.tensors_mut() {
                        g.iter_mut().for_each(|v| *v *= s);
                    }
                }
            }
            let lr = schedule(train, step, total_steps);
            adam.begin_step();
            for (slot, (p, g)) in w.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
                adam.update(slot, p, g, lr);
            }
            report.steps += 1;
        }
        report
            .epoch_train_loss
            .push(epoch_loss / epoch_tokens.max(1) as f64);
    }
    if !w.all_finite() {
        return Err(Error::Diverged {
            step: report.steps,
            loss: f64::NAN,
        });
    }
    report.final_heldout_loss = heldout_loss(&w, &held)?;
    Ok((w, report))
}

/// Linear warmup, then cosine decay to 10% of the peak rate.
fn schedule(train: &TrainConfig, step: usize, total: usize) -> f64 {
    if step < train.warmup_steps {
        return train.lr * (step + 1) as f64 / train.warmup_steps as f64;
    }
    let span = total.saturating_sub(train.warmup_steps).max(1) as f64;
    let progress = ((step - train.warmup_steps) as f64 / span).min(1.0);
    train.lr * (0.1 + 0.9 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
