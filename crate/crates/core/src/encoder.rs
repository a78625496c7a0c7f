//! Sentence encoding: Adam on `Z` alone, with a plateau schedule and early
//! stopping, repeated over several random initializations.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::loss_and_grad;
use crate::injection::{InjectionSpec, LatentState};
use crate::linalg::Real;
use crate::model::{sentence_frame, ModelWeights};
use crate::optim::{Adam, AdamConfig, PlateauScheduler};
use crate::tokenizer::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    #[default]
    XavierNormal,
    L2Normalized,
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            InitStrategy::XavierNormal => "xavier_normal",
            InitStrategy::L2Normalized => "l2_normalized",
        })
    }
}

impl FromStr for InitStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xavier_normal" | "xavier" => Ok(InitStrategy::XavierNormal),
            "l2_normalized" | "l2" => Ok(InitStrategy::L2Normalized),
            other => Err(Error::Config(format!("unknown init strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeConfig {
    pub lr: f64,
    pub max_steps: usize,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// Relative improvement the plateau scheduler requires.
    pub plateau_threshold: f64,
    pub n_inits: usize,
    pub init: InitStrategy,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop once the loss reaches `min(0.1, 2/T)`.
    pub early_stopping: bool,
    pub keep_trace: bool,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            max_steps: 1000,
            patience: 3,
            factor: 0.8,
            min_lr: 1e-5,
            plateau_threshold: 1e-4,
            n_inits: 4,
            init: InitStrategy::XavierNormal,
            adam: AdamConfig::default(),
            seed: 0,
            early_stopping: true,
            keep_trace: true,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > self.min_lr && self.min_lr > 0.0) {
            return Err(Error::Config("need lr > min_lr > 0".into()));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config("plateau factor must lie in (0, 1)".into()));
        }
        if self.n_inits == 0 {
            return Err(Error::Config("n_inits must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// `min(0.1, 2/T)` with `T` the number of scored positions.
pub fn loss_threshold(scored_positions: usize) -> f64 {
    (2.0 / scored_positions as f64).min(0.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossThreshold,
    LrFloor,
    MaxSteps,
    /// A non-finite loss or gradient aborted this initialization.
    NonFinite,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            StopReason::LossThreshold => "loss_threshold",
            StopReason::LrFloor => "lr_floor",
            StopReason::MaxSteps => "max_steps",
            StopReason::NonFinite => "non_finite",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitRecord<T> {
    pub init: usize,
    pub seed: u64,
    pub final_z: LatentState<T>,
    pub best_z: LatentState<T>,
    pub best_loss: f64,
    pub best_step: usize,
    /// Adam updates applied.
    pub steps: usize,
    pub stop_reason: StopReason,
    pub final_lr: f64,
    /// Loss before each update, plus the loss at the stopping point.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeResult<T> {
    pub threshold: f64,
    pub inits: Vec<InitRecord<T>>,
}

impl<T: Real> EncodeResult<T> {
    /// Lowest best-loss init; ties go to the lower index.
    pub fn best(&self) -> &InitRecord<T> {
        let mut best = &self.inits[0];
        for r in &self.inits[1..] {
            if r.best_loss < best.best_loss {
                best = r;
            }
        }
        best
    }
}

pub fn init_seed(base: u64, init: usize) -> u64 {
    base.wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add((init as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// A random starting latent. Xavier draws from `N(0, 2/(d'+d))`; the L2
/// strategy rescales a standard normal draw to unit norm.
pub fn init_latent<T: Real>(
    strategy: InitStrategy,
    d_prime: usize,
    k: usize,
    d: usize,
    seed: u64,
) -> Result<LatentState<T>> {
    if k == 0 || d_prime % k != 0 {
        return Err(Error::Config(format!("k={k} does not divide d'={d_prime}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = match strategy {
        InitStrategy::XavierNormal => {
            let std = (2.0 / (d_prime + d) as f64).sqrt();
            let n = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            (0..d_prime).map(|_| n.sample(&mut rng)).collect()
        }
        InitStrategy::L2Normalized => {
            let raw: Vec<f64> = (0..d_prime)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw.into_iter().map(|v| v / norm).collect()
        }
    };
    LatentState::new(z.into_iter().map(T::lit).collect(), d_prime, k)
}

fn run_init<T: Real>(
    w: &ModelWeights<T>,
    tokens: &TokenSeq,
    spec: &InjectionSpec<T>,
    cfg: &EncodeConfig,
    threshold: f64,
    init: usize,
) -> Result<InitRecord<T>> {
    let seed = init_seed(cfg.seed, init);
    let mut z = init_latent::<T>(cfg.init, spec.config.d_prime, spec.config.k, spec.d, seed)?;
    let mut adam = Adam::<T>::new(&[z.z.len()], cfg.adam);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.factor, cfg.patience, cfg.plateau_threshold);
    let mut best_z = z.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_step = 0;
    let mut trace = Vec::new();
    let mut step = 0;
    let stop_reason = loop {
        let g = match loss_and_grad(w, tokens, spec, &z) {
            Ok(g) if g.finite => g,
            Ok(_) | Err(Error::NonFinite { .. }) => break StopReason::NonFinite,
            Err(e) => return Err(e),
        };
        if cfg.keep_trace {
            trace.push(g.loss);
        }
        if g.loss < best_loss {
            best_loss = g.loss;
            best_z = z.clone();
            best_step = step;
        }
        if cfg.early_stopping && g.loss <= threshold {
            break StopReason::LossThreshold;
        }
        sched.observe(g.loss);
        if sched.lr() <= cfg.min_lr {
            break StopReason::LrFloor;
        }
        if step == cfg.max_steps {
            break StopReason::MaxSteps;
        }
        adam.begin_step();
        adam.update(0, &mut z.z, &g.grad, sched.lr());
        step += 1;
    };
    Ok(InitRecord {
        init,
        seed,
        final_z: z,
        best_z,
        best_loss,
        best_step,
        steps: step,
        stop_reason,
        final_lr: sched.lr(),
        loss_trace: trace,
    })
}

/// Runs initialization `init` alone; [`encode_sentence`] is the ordered
/// collection of these over `0..n_inits`.
pub fn encode_init<T: Real>(
    w: &ModelWeights<T>,
    tokens: &TokenSeq,
    spec: &InjectionSpec<T>,
    cfg: &EncodeConfig,
    init: usize,
) -> Result<InitRecord<T>> {
    cfg.validate()?;
    let (_, targets) = sentence_frame(tokens);
    run_init(w, tokens, spec, cfg, loss_threshold(targets.len()), init)
}

/// Encodes one sentence from `cfg.n_inits` random starts. Results are
/// ordered by init index regardless of scheduling.
pub fn encode_sentence<T: Real>(
    w: &ModelWeights<T>,
    tokens: &TokenSeq,
    spec: &InjectionSpec<T>,
    cfg: &EncodeConfig,
) -> Result<EncodeResult<T>> {
    cfg.validate()?;
    let (_, targets) = sentence_frame(tokens);
    let threshold = loss_threshold(targets.len());
    let inits = (0..cfg.n_inits)
        .into_par_iter()
        .map(|i| run_init(w, tokens, spec, cfg, threshold, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodeResult { threshold, inits })
}
