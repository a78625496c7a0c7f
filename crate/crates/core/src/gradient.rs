//! Sentence loss and its exact derivative with respect to the latent only.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::injection::{InjectionSpec, LatentState};
use crate::linalg::Real;
use crate::model::{
    backward, cross_entropy_backward, forward_traced, sentence_frame, ModelWeights,
};
use crate::tokenizer::TokenSeq;

#[derive(Debug, Clone, PartialEq)]
pub struct GradResult<T> {
    /// Mean next-token cross entropy over the sentence and its EOS.
    pub loss: f64,
    /// `∂loss/∂Z`, same layout as [`LatentState::z`].
    pub grad: Vec<T>,
    pub finite: bool,
}

impl<T: Real> GradResult<T> {
    pub fn grad_norm(&self) -> f64 {
        self.grad
            .iter()
            .map(|g| g.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn check_tokens<T: Real>(w: &ModelWeights<T>, tokens: &TokenSeq) -> Result<()> {
    tokens.check_vocab(w.config.vocab_size)?;
    let (inputs, _) = sentence_frame(tokens);
    if inputs.len() < 2 {
        return Err(Error::InvalidTokens("sentence has no words".into()));
    }
    Ok(())
}

pub fn loss_and_grad<T: Real>(
    w: &ModelWeights<T>,
    tokens: &TokenSeq,
    spec: &InjectionSpec<T>,
    z: &LatentState<T>,
) -> Result<GradResult<T>> {
    check_tokens(w, tokens)?;
    let mut plan = spec.plan(z)?;
    let (inputs, targets) = sentence_frame(tokens);
    let trace = forward_traced(w, &inputs, &plan)?;
    let mut d_logits = vec![T::zero(); trace.logits.len()];
    let loss = cross_entropy_backward(&trace.logits, &targets, w.config.vocab_size, &mut d_logits);
    backward(w, &trace, &d_logits, None, &mut plan);
    let grad = plan.latent_grad();
    let finite = loss.is_finite() && grad.iter().all(|g| g.is_finite());
    Ok(GradResult {
        loss: loss.as_f64(),
        grad,
        finite,
    })
}

/// Loss without the reverse pass.
pub fn sentence_loss<T: Real>(
    w: &ModelWeights<T>,
    tokens: &TokenSeq,
    spec: &InjectionSpec<T>,
    z: &LatentState<T>,
) -> Result<f64> {
    check_tokens(w, tokens)?;
    let plan = spec.plan(z)?;
    let (inputs, targets) = sentence_frame(tokens);
    let trace = forward_traced(w, &inputs, &plan)?;
    let vocab = w.config.vocab_size;
    let mut total = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let row = &trace.logits[t * vocab..(t + 1) * vocab];
        total += crate::linalg::log_sum_exp(row).as_f64() - row[y as usize].as_f64();
    }
    Ok(total / targets.len() as f64)
}

/// Largest relative disagreement between the analytic gradient and central
/// differences over `n_coords` seeded coordinates of `Z`.
pub fn finite_diff_check<T: Real>(
    w: &ModelWeights<T>,
    tokens: &TokenSeq,
    spec: &InjectionSpec<T>,
    z: &LatentState<T>,
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let analytic = loss_and_grad(w, tokens, spec, z)?;
    let n = z.z.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = sample(&mut rng, n, n_coords.min(n));
    let eps = T::lit(epsilon);
    let mut worst = 0.0f64;
    for i in coords {
        let mut zp = z.clone();
        zp.z[i] += eps;
        let mut zm = z.clone();
        zm.z[i] -= eps;
        // the perturbation actually realized in T
        let h = (zp.z[i] - zm.z[i]).as_f64();
        let numeric =
            (sentence_loss(w, tokens, spec, &zp)? - sentence_loss(w, tokens, spec, &zm)?) / h;
        let a = analytic.grad[i].as_f64();
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
