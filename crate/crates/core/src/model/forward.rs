use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, gemm_acc, softmax_in_place, Matrix, Real};

use super::{BiasPlan, BlockWeights, ModelWeights, QueryMode, Site, LN_EPS};

/// Residual-stream snapshots: the embedding output, each block's output and
/// the head input, all after bias injection. `n_layers + 2` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates<T> {
    pub sites: Vec<(Site, Matrix<T>)>,
}

impl<T: Real> HiddenStates<T> {
    pub fn site(&self, site: Site) -> Option<&Matrix<T>> {
        self.sites.iter().find(|(s, _)| *s == site).map(|(_, m)| m)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LnTrace<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
    pub out: Vec<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockTrace<T> {
    pub ln1: LnTrace<T>,
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    /// heads × T × T, row-major; only the causal lower triangle is meaningful.
    pub probs: Vec<T>,
    pub ctx: Vec<T>,
    pub ln2: LnTrace<T>,
    pub f1: Vec<T>,
    pub g: Vec<T>,
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub len: usize,
    pub mode: QueryMode,
    pub tokens: Vec<u32>,
    /// Pre-bias embedding sum.
    pub emb: Vec<T>,
    /// `h[0]` post-bias embedding, `h[l+1]` post-bias output of block `l`.
    pub h: Vec<Vec<T>>,
    pub blocks: Vec<BlockTrace<T>>,
    pub lnf: LnTrace<T>,
    /// LNf output plus head bias.
    pub head_in: Vec<T>,
    pub logits: Vec<T>,
    /// Query rows handed to the plan at each active site.
    pub queries: Vec<(Site, Vec<T>)>,
}

impl<T: Real> Trace<T> {
    pub fn logits_matrix(&self, vocab: usize) -> Matrix<T> {
        Matrix::from_vec(self.len, vocab, self.logits.clone())
    }

    pub fn hidden(&self) -> HiddenStates<T> {
        let d = self.emb.len() / self.len.max(1);
        let mut sites = Vec::with_capacity(self.h.len() + 1);
        sites.push((
            Site::Embed,
            Matrix::from_vec(self.len, d, self.h[0].clone()),
        ));
        for l in 0..self.blocks.len() {
            sites.push((
                Site::Layer(l),
                Matrix::from_vec(self.len, d, self.h[l + 1].clone()),
            ));
        }
        sites.push((
            Site::Head,
            Matrix::from_vec(self.len, d, self.head_in.clone()),
        ));
        HiddenStates { sites }
    }
}

pub(crate) fn gelu<T: Real>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let inner = c * (x + T::lit(0.044715) * x * x * x);
    T::lit(0.5) * x * (T::one() + inner.tanh())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let inner = c * (x + T::lit(0.044715) * x * x * x);
    let th = inner.tanh();
    T::lit(0.5) * (T::one() + th)
        + T::lit(0.5) * x * (T::one() - th * th) * c * (T::one() + T::lit(3.0 * 0.044715) * x * x)
}

pub(crate) fn layer_norm<T: Real>(x: &[T], g: &[T], b: &[T], len: usize, d: usize) -> LnTrace<T> {
    let mut xhat = vec![T::zero(); len * d];
    let mut out = vec![T::zero(); len * d];
    let mut rstd = vec![T::zero(); len];
    let inv_d = T::lit(1.0 / d as f64);
    for t in 0..len {
        let row = &x[t * d..(t + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + T::lit(LN_EPS)).sqrt();
        rstd[t] = r;
        for i in 0..d {
            let xh = (row[i] - mean) * r;
            xhat[t * d + i] = xh;
            out[t * d + i] = g[i] * xh + b[i];
        }
    }
    LnTrace { xhat, rstd, out }
}

fn inject<T: Real, P: BiasPlan<T> + ?Sized>(
    plan: &P,
    site: Site,
    stream: &[T],
    target: &mut [T],
    len: usize,
    d: usize,
    queries: &mut Vec<(Site, Vec<T>)>,
) -> Result<()> {
    if !plan.is_active(site) {
        return Ok(());
    }
    let mode = plan.query_mode();
    let mut q = vec![T::zero(); len * d];
    let mut bias = vec![T::zero(); d];
    for t in 0..len {
        let src = match mode {
            QueryMode::PreviousToken if t == 0 => None,
            QueryMode::PreviousToken => Some(t - 1),
            QueryMode::CurrentToken => Some(t),
        };
        if let Some(s) = src {
            q[t * d..(t + 1) * d].copy_from_slice(&stream[s * d..(s + 1) * d]);
        }
        plan.bias(site, t, &q[t * d..(t + 1) * d], &mut bias);
        for (dst, &b) in target[t * d..(t + 1) * d].iter_mut().zip(&bias) {
            *dst += b;
        }
        if target[t * d..(t + 1) * d].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { site, position: t });
        }
    }
    queries.push((site, q));
    Ok(())
}

fn block_forward<T: Real>(
    b: &BlockWeights<T>,
    x: &[T],
    len: usize,
    d: usize,
    n_heads: usize,
    d_ff: usize,
) -> (Vec<T>, BlockTrace<T>) {
    let hd = d / n_heads;
    let ln1 = layer_norm(x, &b.ln1_g, &b.ln1_b, len, d);
    let mut q = vec![T::zero(); len * d];
    let mut k = vec![T::zero(); len * d];
    let mut v = vec![T::zero(); len * d];
    gemm_acc(&ln1.out, &b.w_q, &mut q, len, d, d);
    gemm_acc(&ln1.out, &b.w_k, &mut k, len, d, d);
    gemm_acc(&ln1.out, &b.w_v, &mut v, len, d, d);

    let scale = T::lit(1.0 / (hd as f64).sqrt());
    let mut probs = vec![T::zero(); n_heads * len * len];
    let mut ctx = vec![T::zero(); len * d];
    for h in 0..n_heads {
        let off = h * hd;
        for t in 0..len {
            let p = &mut probs[(h * len + t) * len..(h * len + t) * len + t + 1];
            let qt = &q[t * d + off..t * d + off + hd];
            for (j, pj) in p.iter_mut().enumerate() {
                *pj = dot(qt, &k[j * d + off..j * d + off + hd]) * scale;
            }
            softmax_in_place(p);
            let c = &mut ctx[t * d + off..t * d + off + hd];
            for (j, &pj) in p.iter().enumerate() {
                axpy(pj, &v[j * d + off..j * d + off + hd], c);
            }
        }
    }
    let mut r1 = x.to_vec();
    gemm_acc(&ctx, &b.w_o, &mut r1, len, d, d);

    let ln2 = layer_norm(&r1, &b.ln2_g, &b.ln2_b, len, d);
    let mut f1 = Vec::with_capacity(len * d_ff);
    for _ in 0..len {
        f1.extend_from_slice(&b.b_ff1);
    }
    gemm_acc(&ln2.out, &b.w_ff1, &mut f1, len, d, d_ff);
    let g: Vec<T> = f1.iter().map(|&v| gelu(v)).collect();
    let mut out = r1;
    for t in 0..len {
        for (o, &bb) in out[t * d..(t + 1) * d].iter_mut().zip(&b.b_ff2) {
            *o += bb;
        }
    }
    gemm_acc(&g, &b.w_ff2, &mut out, len, d_ff, d);

    (
        out,
        BlockTrace {
            ln1,
            q,
            k,
            v,
            probs,
            ctx,
            ln2,
            f1,
            g,
        },
    )
}

pub(crate) fn forward_traced<T: Real, P: BiasPlan<T> + ?Sized>(
    w: &ModelWeights<T>,
    tokens: &[u32],
    plan: &P,
) -> Result<Trace<T>> {
    let cfg = &w.config;
    let (d, len, vocab) = (cfg.d, tokens.len(), cfg.vocab_size);
    if len == 0 {
        return Err(Error::InvalidTokens("empty sequence".into()));
    }
    if len > cfg.max_len {
        return Err(Error::SequenceTooLong {
            len,
            max_len: cfg.max_len,
        });
    }
    let mut emb = vec![T::zero(); len * d];
    for (t, &tok) in tokens.iter().enumerate() {
        if tok as usize >= vocab {
            return Err(Error::InvalidTokenId {
                id: tok,
                size: vocab,
            });
        }
        let row = &mut emb[t * d..(t + 1) * d];
        let te = &w.tok_emb[tok as usize * d..(tok as usize + 1) * d];
        let pe = &w.pos_emb[t * d..(t + 1) * d];
        for i in 0..d {
            row[i] = te[i] + pe[i];
        }
    }

    let mut queries = Vec::new();
    let mut h0 = emb.clone();
    inject(plan, Site::Embed, &emb, &mut h0, len, d, &mut queries)?;

    let mut h = Vec::with_capacity(cfg.n_layers + 1);
    h.push(h0);
    let mut blocks = Vec::with_capacity(cfg.n_layers);
    for (l, bw) in w.blocks.iter().enumerate() {
        let (mut out, trace) = block_forward(bw, &h[l], len, d, cfg.n_heads, cfg.d_ff);
        inject(plan, Site::Layer(l), &h[l], &mut out, len, d, &mut queries)?;
        if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                site: Site::Layer(l),
                position: pos / d,
            });
        }
        blocks.push(trace);
        h.push(out);
    }

    let last = &h[cfg.n_layers];
    let lnf = layer_norm(last, &w.lnf_g, &w.lnf_b, len, d);
    let mut head_in = lnf.out.clone();
    inject(plan, Site::Head, last, &mut head_in, len, d, &mut queries)?;
    let mut logits = vec![T::zero(); len * vocab];
    gemm_acc(&head_in, &w.head, &mut logits, len, d, vocab);
    if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            site: Site::Head,
            position: pos / vocab,
        });
    }

    Ok(Trace {
        len,
        mode: plan.query_mode(),
        tokens: tokens.to_vec(),
        emb,
        h,
        blocks,
        lnf,
        head_in,
        logits,
        queries,
    })
}

/// Logits (`T × vocab_size`) and per-site hidden states.
pub fn forward<T: Real, P: BiasPlan<T> + ?Sized>(
    w: &ModelWeights<T>,
    tokens: &[u32],
    plan: &P,
) -> Result<(Matrix<T>, HiddenStates<T>)> {
    let trace = forward_traced(w, tokens, plan)?;
    Ok((trace.logits_matrix(w.config.vocab_size), trace.hidden()))
}

pub fn forward_logits<T: Real, P: BiasPlan<T> + ?Sized>(
    w: &ModelWeights<T>,
    tokens: &[u32],
    plan: &P,
) -> Result<Matrix<T>> {
    let trace = forward_traced(w, tokens, plan)?;
    Ok(Matrix::from_vec(
        trace.len,
        w.config.vocab_size,
        trace.logits,
    ))
}
