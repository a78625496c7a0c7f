//! Decoder-only transformer with frozen weights and additive bias injection.
//!
//! Block layout follows GPT-2 (pre-LN):
//!
//! ```text
//! h0  = tok_emb[x] + pos_emb[t]              (+ z' at Site::Embed)
//! r   = h + Attn(LN1(h))
//! h'  = r + FFN(LN2(r))                      (+ z' at Site::Layer(l))
//! u   = LNf(hL)                              (+ z' at Site::Head)
//! logits = u · W_head
//! ```
//!
//! The bias plan is queried once per active site and position. Its
//! `h_prev` argument is the site-local query vector: the previous position of
//! the stream feeding the site (the pre-bias embedding sum for `Embed`, the
//! block input for `Layer(l)`, the final residual for `Head`), or zeros at the
//! first position.

mod backward;
mod forward;
mod persist;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Matrix, Precision, Real};

#[allow(unused_imports)]
pub(crate) use backward::NoSites;
pub use backward::SiteAdjoint;
pub(crate) use backward::{backward, cross_entropy_backward};
pub(crate) use forward::forward_traced;
#[allow(unused_imports)]
pub(crate) use forward::Trace;
pub use forward::{forward, forward_logits, HiddenStates};
pub use persist::{
    hash_weights_file, load_weights, load_weights_as, save_weights, weights_file_hash,
};
pub use train::{heldout_loss, train_toy_lm, TrainConfig, TrainReport};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    Embed,
    Layer(usize),
    Head,
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Site::Embed => f.write_str("embed"),
            Site::Layer(l) => write!(f, "layer{l}"),
            Site::Head => f.write_str("head"),
        }
    }
}

/// Which position of a site's input stream is handed to the plan as `h_prev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// Row `t-1` of the stream; zeros at `t = 0`.
    #[default]
    PreviousToken,
    /// Row `t` of the stream.
    CurrentToken,
}

/// Supplies the additive bias `z'` at each injection site and position.
pub trait BiasPlan<T: Real> {
    fn is_active(&self, site: Site) -> bool;

    fn query_mode(&self) -> QueryMode {
        QueryMode::PreviousToken
    }

    /// Write the bias for `site` at 0-based `position` into `out` (length d).
    fn bias(&self, site: Site, position: usize, h_prev: &[T], out: &mut [T]);
}

/// The plain forward pass: no site is active.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoBias;

impl<T: Real> BiasPlan<T> for NoBias {
    fn is_active(&self, _site: Site) -> bool {
        false
    }
    fn bias(&self, _site: Site, _position: usize, _h_prev: &[T], _out: &mut [T]) {}
}

/// Every site active, every bias exactly zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroBias;

impl<T: Real> BiasPlan<T> for ZeroBias {
    fn is_active(&self, _site: Site) -> bool {
        true
    }
    fn bias(&self, _site: Site, _position: usize, _h_prev: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub precision: Precision,
}

impl ModelConfig {
    /// Desk-scale default: d=64, 2 layers, 4 heads, d_ff=256, max_len=160.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            d: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            vocab_size,
            max_len: 160,
            precision: Precision::F64,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }

    pub fn sites(&self) -> Vec<Site> {
        let mut s = vec![Site::Embed];
        s.extend((0..self.n_layers).map(Site::Layer));
        s.push(Site::Head);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d={} not divisible by n_heads={}",
                self.d, self.n_heads
            )));
        }
        if self.max_len < 152 {
            return Err(Error::Config(format!(
                "max_len={} must be at least 152",
                self.max_len
            )));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("vocab_size must be at least 4".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<T> {
    pub ln1_g: Vec<T>,
    pub ln1_b: Vec<T>,
    pub w_q: Vec<T>,
    pub w_k: Vec<T>,
    pub w_v: Vec<T>,
    pub w_o: Vec<T>,
    pub ln2_g: Vec<T>,
    pub ln2_b: Vec<T>,
    /// d × d_ff
    pub w_ff1: Vec<T>,
    pub b_ff1: Vec<T>,
    /// d_ff × d
    pub w_ff2: Vec<T>,
    pub b_ff2: Vec<T>,
}

/// All frozen parameters. Linear maps are stored `in × out`, so `y = x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub config: ModelConfig,
    /// vocab_size × d
    pub tok_emb: Vec<T>,
    /// max_len × d
    pub pos_emb: Vec<T>,
    pub blocks: Vec<BlockWeights<T>>,
    pub lnf_g: Vec<T>,
    pub lnf_b: Vec<T>,
    /// d × vocab_size
    pub head: Vec<T>,
}

impl<T: Real> ModelWeights<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let z = |n: usize| vec![T::zero(); n];
        let (d, f) = (config.d, config.d_ff);
        Self {
            config: config.clone(),
            tok_emb: z(config.vocab_size * d),
            pos_emb: z(config.max_len * d),
            blocks: (0..config.n_layers)
                .map(|_| BlockWeights {
                    ln1_g: z(d),
                    ln1_b: z(d),
                    w_q: z(d * d),
                    w_k: z(d * d),
                    w_v: z(d * d),
                    w_o: z(d * d),
                    ln2_g: z(d),
                    ln2_b: z(d),
                    w_ff1: z(d * f),
                    b_ff1: z(f),
                    w_ff2: z(f * d),
                    b_ff2: z(d),
                })
                .collect(),
            lnf_g: z(d),
            lnf_b: z(d),
            head: z(d * config.vocab_size),
        }
    }

    /// Tensor names and shapes, in file manifest order.
    pub fn manifest(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let (d, f, v) = (config.d, config.d_ff, config.vocab_size);
        let mut out = vec![
            ("tok_emb".to_string(), vec![v, d]),
            ("pos_emb".to_string(), vec![config.max_len, d]),
        ];
        for l in 0..config.n_layers {
            let p = |n: &str| format!("blocks.{l}.{n}");
            out.extend([
                (p("ln1_g"), vec![d]),
                (p("ln1_b"), vec![d]),
                (p("w_q"), vec![d, d]),
                (p("w_k"), vec![d, d]),
                (p("w_v"), vec![d, d]),
                (p("w_o"), vec![d, d]),
                (p("ln2_g"), vec![d]),
                (p("ln2_b"), vec![d]),
                (p("w_ff1"), vec![d, f]),
                (p("b_ff1"), vec![f]),
                (p("w_ff2"), vec![f, d]),
                (p("b_ff2"), vec![d]),
            ]);
        }
        out.extend([
            ("lnf_g".to_string(), vec![d]),
            ("lnf_b".to_string(), vec![d]),
            ("head".to_string(), vec![d, v]),
        ]);
        out
    }

    /// Parameter tensors in manifest order.
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for b in &self.blocks {
            out.extend([
                &b.ln1_g, &b.ln1_b, &b.w_q, &b.w_k, &b.w_v, &b.w_o, &b.ln2_g, &b.ln2_b, &b.w_ff1,
                &b.b_ff1, &b.w_ff2, &b.b_ff2,
            ]);
        }
        out.extend([&self.lnf_g, &self.lnf_b, &self.head]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for b in &mut self.blocks {
            out.extend([
                &mut b.ln1_g,
                &mut b.ln1_b,
                &mut b.w_q,
                &mut b.w_k,
                &mut b.w_v,
                &mut b.w_o,
                &mut b.ln2_g,
                &mut b.ln2_b,
                &mut b.w_ff1,
                &mut b.b_ff1,
                &mut b.w_ff2,
                &mut b.b_ff2,
            ]);
        }
        out.extend([&mut self.lnf_g, &mut self.lnf_b, &mut self.head]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ModelWeights<U> {
        let mut config = self.config.clone();
        config.precision = U::PRECISION;
        let mut out = ModelWeights::<U>::zeros(&config);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = U::lit(s.as_f64());
            }
        }
        out
    }
}

/// Gaussian weights with `1/sqrt(fan_in)` scaling; residual output projections
/// are further scaled by `1/sqrt(2 n_layers)`. Layer-norm gains 1, biases 0.
pub fn init_weights<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ModelWeights::<T>::zeros(cfg);
    let (d, f) = (cfg.d as f64, cfg.d_ff as f64);
    let resid = (2.0 * cfg.n_layers as f64).sqrt();
    let mut fill = |v: &mut Vec<T>, std: f64| {
        let normal = Normal::new(0.0, std).expect("positive std");
        for x in v.iter_mut() {
            *x = T::lit(normal.sample(&mut rng));
        }
    };
    fill(&mut w.tok_emb, 1.0 / d.sqrt());
    fill(&mut w.pos_emb, 1.0 / d.sqrt());
    for b in &mut w.blocks {
        fill(&mut b.w_q, 1.0 / d.sqrt());
        fill(&mut b.w_k, 1.0 / d.sqrt());
        fill(&mut b.w_v, 1.0 / d.sqrt());
        fill(&mut b.w_o, 1.0 / d.sqrt() / resid);
        fill(&mut b.w_ff1, 1.0 / d.sqrt());
        fill(&mut b.w_ff2, 1.0 / f.sqrt() / resid);
        b.ln1_g.iter_mut().for_each(|g| *g = T::one());
        b.ln2_g.iter_mut().for_each(|g| *g = T::one());
    }
    fill(&mut w.head, 1.0 / d.sqrt());
    w.lnf_g.iter_mut().for_each(|g| *g = T::one());
    Ok(w)
}

/// Mean over positions of `-log softmax(logits_t)[target_t]`.
pub fn cross_entropy<T: Real>(logits: &Matrix<T>, targets: &[u32]) -> Result<T> {
    if targets.len() != logits.rows {
        return Err(Error::Shape(format!(
            "{} targets for {} logit rows",
            targets.len(),
            logits.rows
        )));
    }
    if targets.is_empty() {
        return Err(Error::Shape("no targets".into()));
    }
    let mut total = T::zero();
    for (t, &y) in targets.iter().enumerate() {
        let row = logits.row(t);
        let y = y as usize;
        if y >= row.len() {
            return Err(Error::InvalidTokenId {
                id: y as u32,
                size: row.len(),
            });
        }
        total += log_sum_exp(row) - row[y];
    }
    Ok(total / T::lit(targets.len() as f64))
}

/// `BOS x_1..x_T` as inputs and `x_1..x_T EOS` as targets.
pub fn lm_frame(sentence: &[u32]) -> (Vec<u32>, Vec<u32>) {
    use crate::tokenizer::{BOS, EOS};
    let mut inputs = Vec::with_capacity(sentence.len() + 1);
    inputs.push(BOS);
    inputs.extend_from_slice(sentence);
    let mut targets = sentence.to_vec();
    targets.push(EOS);
    (inputs, targets)
}

/// [`lm_frame`] of a sequence, dropping a leading BOS and trailing EOS first.
pub fn sentence_frame(s: &crate::tokenizer::TokenSeq) -> (Vec<u32>, Vec<u32>) {
    use crate::tokenizer::{BOS, EOS};
    let mut ids = s.ids();
    if ids.first() == Some(&BOS) {
        ids = &ids[1..];
    }
    if ids.last() == Some(&EOS) {
        ids = &ids[..ids.len() - 1];
    }
    lm_frame(ids)
}

#[cfg(test)]
pub(crate) fn tiny_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        d: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        vocab_size,
        max_len: 160,
        precision: Precision::F64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::desk(50);
        assert!(c.validate().is_ok());
        assert_eq!(c.head_dim(), 16);
        c.n_heads = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(50);
        c.max_len = 151;
        assert!(c.validate().is_err());
        assert_eq!(ModelConfig::desk(50).sites().len(), 4);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let c = tiny_config(12);
        let a = init_weights::<f64>(&c, 7).unwrap();
        let b = init_weights::<f64>(&c, 7).unwrap();
        let other = init_weights::<f64>(&c, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tok_emb, other.tok_emb);
        assert!(a.blocks[0].ln1_g.iter().all(|&g| g == 1.0));
        assert!(a.lnf_b.iter().all(|&g| g == 0.0));
        assert_eq!(
            a.param_count(),
            ModelWeights::<f64>::manifest(&c)
                .iter()
                .map(|(_, s)| s.iter().product::<usize>())
                .sum::<usize>()
        );
    }

    #[test]
    fn cross_entropy_uniform_and_peaked() {
        let logits = Matrix::<f64>::zeros(3, 8);
        let ce = cross_entropy(&logits, &[1, 5, 7]).unwrap();
        assert!((ce - 8f64.ln()).abs() < 1e-12);
        assert!((ce - 2.0794).abs() < 1e-4);

        let mut peaked = Matrix::<f64>::zeros(2, 8);
        peaked.data[3] = 60.0;
        peaked.data[8 + 6] = 60.0;
        assert!(cross_entropy(&peaked, &[3, 6]).unwrap() < 1e-20);
        assert!(cross_entropy(&peaked, &[3]).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_summation() {
        let logits: Matrix<f64> = Matrix::from_vec(
            3,
            4,
            vec![
                0.3, -1.2, 2.0, 0.1, 1.5, 1.5, -0.5, 0.0, -2.0, 0.7, 0.2, 3.1,
            ],
        );
        let targets = [2u32, 0, 3];
        let mut direct = 0.0f64;
        for (t, &y) in targets.iter().enumerate() {
            let row = logits.row(t);
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            direct += -(row[y as usize].exp() / z).ln();
        }
        direct /= 3.0;
        let ce = cross_entropy(&logits, &targets).unwrap();
        assert!((ce - direct).abs() < 1e-14);
    }
}
