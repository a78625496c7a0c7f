//! Hand-written adjoints for the fixed operator set of the forward pass.

use crate::linalg::{axpy, dot, gemm_nt_acc, gemm_tn_acc, Real};

use super::forward::{gelu_grad, BlockTrace, LnTrace, Trace};
use super::{BlockWeights, ModelWeights, QueryMode, Site};

/// Receives the adjoint of an active site's bias rows and returns the adjoint
/// of the query rows the plan consumed.
pub trait SiteAdjoint<T: Real> {
    fn site_backward(&mut self, site: Site, queries: &[T], d_bias: &[T], d_queries: &mut [T]);
}

pub(crate) struct NoSites;

impl<T: Real> SiteAdjoint<T> for NoSites {
    fn site_backward(&mut self, _: Site, _: &[T], _: &[T], _: &mut [T]) {}
}

fn layer_norm_backward<T: Real>(
    dy: &[T],
    ln: &LnTrace<T>,
    g: &[T],
    len: usize,
    d: usize,
    dx: &mut [T],
    mut dparams: Option<(&mut [T], &mut [T])>,
) {
    let inv_d = T::lit(1.0 / d as f64);
    let mut dxhat = vec![T::zero(); d];
    for t in 0..len {
        let dyr = &dy[t * d..(t + 1) * d];
        let xh = &ln.xhat[t * d..(t + 1) * d];
        if let Some((dg, db)) = dparams.as_mut() {
            for i in 0..d {
                dg[i] += dyr[i] * xh[i];
                db[i] += dyr[i];
            }
        }
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for i in 0..d {
            dxhat[i] = dyr[i] * g[i];
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xh[i];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let r = ln.rstd[t];
        let out = &mut dx[t * d..(t + 1) * d];
        for i in 0..d {
            out[i] += r * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
}

fn scatter_queries<T: Real>(dq: &[T], stream: &mut [T], mode: QueryMode, len: usize, d: usize) {
    match mode {
        QueryMode::PreviousToken => {
            for t in 1..len {
                axpy(
                    T::one(),
                    &dq[t * d..(t + 1) * d],
                    &mut stream[(t - 1) * d..t * d],
                );
            }
        }
        QueryMode::CurrentToken => axpy(T::one(), dq, stream),
    }
}

fn site_pass<T: Real, S: SiteAdjoint<T>>(
    trace: &Trace<T>,
    site: Site,
    d_bias: &[T],
    stream_grad: &mut [T],
    sites: &mut S,
    d: usize,
) {
    if let Some((_, q)) = trace.queries.iter().find(|(s, _)| *s == site) {
        let mut dq = vec![T::zero(); q.len()];
        sites.site_backward(site, q, d_bias, &mut dq);
        scatter_queries(&dq, stream_grad, trace.mode, trace.len, d);
    }
}

#[allow(clippy::too_many_arguments)]
fn block_backward<T: Real>(
    b: &BlockWeights<T>,
    bt: &BlockTrace<T>,
    d_out: &[T],
    d_x: &mut [T],
    len: usize,
    d: usize,
    n_heads: usize,
    d_ff: usize,
    mut gb: Option<&mut BlockWeights<T>>,
) {
    let hd = d / n_heads;

    // FFN: out = r1 + gelu(ln2 W1 + b1) W2 + b2
    let mut dg = vec![T::zero(); len * d_ff];
    gemm_nt_acc(d_out, &b.w_ff2, &mut dg, len, d, d_ff);
    if let Some(g) = gb.as_deref_mut() {
        gemm_tn_acc(&bt.g, d_out, &mut g.w_ff2, len, d_ff, d);
        for t in 0..len {
            axpy(T::one(), &d_out[t * d..(t + 1) * d], &mut g.b_ff2);
        }
    }
    for (v, &pre) in dg.iter_mut().zip(&bt.f1) {
        *v *= gelu_grad(pre);
    }
    let mut d_ln2 = vec![T::zero(); len * d];
    gemm_nt_acc(&dg, &b.w_ff1, &mut d_ln2, len, d_ff, d);
    if let Some(g) = gb.as_deref_mut() {
        gemm_tn_acc(&bt.ln2.out, &dg, &mut g.w_ff1, len, d, d_ff);
        for t in 0..len {
            axpy(T::one(), &dg[t * d_ff..(t + 1) * d_ff], &mut g.b_ff1);
        }
    }
    let mut d_r1 = d_out.to_vec();
    layer_norm_backward(
        &d_ln2,
        &bt.ln2,
        &b.ln2_g,
        len,
        d,
        &mut d_r1,
        gb.as_deref_mut()
            .map(|g| (&mut g.ln2_g[..], &mut g.ln2_b[..])),
    );

    // Attention: r1 = x + ctx W_o
    let mut d_ctx = vec![T::zero(); len * d];
    gemm_nt_acc(&d_r1, &b.w_o, &mut d_ctx, len, d, d);
    if let Some(g) = gb.as_deref_mut() {
        gemm_tn_acc(&bt.ctx, &d_r1, &mut g.w_o, len, d, d);
    }
    let scale = T::lit(1.0 / (hd as f64).sqrt());
    let mut dq = vec![T::zero(); len * d];
    let mut dk = vec![T::zero(); len * d];
    let mut dv = vec![T::zero(); len * d];
    let mut dp = vec![T::zero(); len];
    for h in 0..n_heads {
        let off = h * hd;
        for t in 0..len {
            let p = &bt.probs[(h * len + t) * len..(h * len + t) * len + t + 1];
            let dct = &d_ctx[t * d + off..t * d + off + hd];
            let mut weighted = T::zero();
            for j in 0..=t {
                let vj = &bt.v[j * d + off..j * d + off + hd];
                dp[j] = dot(dct, vj);
                weighted += p[j] * dp[j];
                axpy(p[j], dct, &mut dv[j * d + off..j * d + off + hd]);
            }
            let qt = &bt.q[t * d + off..t * d + off + hd];
            for j in 0..=t {
                let ds = p[j] * (dp[j] - weighted) * scale;
                axpy(
                    ds,
                    &bt.k[j * d + off..j * d + off + hd],
                    &mut dq[t * d + off..t * d + off + hd],
                );
                axpy(ds, qt, &mut dk[j * d + off..j * d + off + hd]);
            }
        }
    }
    let mut d_ln1 = vec![T::zero(); len * d];
    gemm_nt_acc(&dq, &b.w_q, &mut d_ln1, len, d, d);
    gemm_nt_acc(&dk, &b.w_k, &mut d_ln1, len, d, d);
    gemm_nt_acc(&dv, &b.w_v, &mut d_ln1, len, d, d);
    if let Some(g) = gb.as_deref_mut() {
        gemm_tn_acc(&bt.ln1.out, &dq, &mut g.w_q, len, d, d);
        gemm_tn_acc(&bt.ln1.out, &dk, &mut g.w_k, len, d, d);
        gemm_tn_acc(&bt.ln1.out, &dv, &mut g.w_v, len, d, d);
    }
    axpy(T::one(), &d_r1, d_x);
    layer_norm_backward(
        &d_ln1,
        &bt.ln1,
        &b.ln1_g,
        len,
        d,
        d_x,
        gb.map(|g| (&mut g.ln1_g[..], &mut g.ln1_b[..])),
    );
}

/// Reverse pass from `d_logits`. Site adjoints are delivered to `sites`;
/// weight gradients are accumulated into `grads` when given.
pub(crate) fn backward<T: Real, S: SiteAdjoint<T>>(
    w: &ModelWeights<T>,
    trace: &Trace<T>,
    d_logits: &[T],
    mut grads: Option<&mut ModelWeights<T>>,
    sites: &mut S,
) {
    let cfg = &w.config;
    let (d, len, vocab, n_layers) = (cfg.d, trace.len, cfg.vocab_size, cfg.n_layers);

    let mut d_head_in = vec![T::zero(); len * d];
    gemm_nt_acc(d_logits, &w.head, &mut d_head_in, len, vocab, d);
    if let Some(g) = grads.as_deref_mut() {
        gemm_tn_acc(&trace.head_in, d_logits, &mut g.head, len, d, vocab);
    }

    let mut dh: Vec<Vec<T>> = (0..=n_layers).map(|_| vec![T::zero(); len * d]).collect();
    site_pass(trace, Site::Head, &d_head_in, &mut dh[n_layers], sites, d);
    layer_norm_backward(
        &d_head_in,
        &trace.lnf,
        &w.lnf_g,
        len,
        d,
        &mut dh[n_layers],
        grads
            .as_deref_mut()
            .map(|g| (&mut g.lnf_g[..], &mut g.lnf_b[..])),
    );

    for l in (0..n_layers).rev() {
        let (lower, upper) = dh.split_at_mut(l + 1);
        let d_out = &upper[0];
        let d_in = &mut lower[l];
        site_pass(trace, Site::Layer(l), d_out, d_in, sites, d);
        block_backward(
            &w.blocks[l],
            &trace.blocks[l],
            d_out,
            d_in,
            len,
            d,
            cfg.n_heads,
            cfg.d_ff,
            grads.as_deref_mut().map(|g| &mut g.blocks[l]),
        );
    }

    let mut d_emb = dh.swap_remove(0);
    let d_h0 = d_emb.clone();
    site_pass(trace, Site::Embed, &d_h0, &mut d_emb, sites, d);
    if let Some(g) = grads {
        for (t, &tok) in trace.tokens.iter().enumerate() {
            let row = &d_emb[t * d..(t + 1) * d];
            axpy(
                T::one(),
                row,
                &mut g.tok_emb[tok as usize * d..(tok as usize + 1) * d],
            );
            axpy(T::one(), row, &mut g.pos_emb[t * d..(t + 1) * d]);
        }
    }
}

/// Adjoint of mean cross entropy w.r.t. logits; returns the loss.
pub(crate) fn cross_entropy_backward<T: Real>(
    logits: &[T],
    targets: &[u32],
    vocab: usize,
    d_logits: &mut [T],
) -> T {
    let len = targets.len();
    let inv = T::lit(1.0 / len as f64);
    let mut loss = T::zero();
    for (t, &y) in targets.iter().enumerate() {
        let row = &logits[t * vocab..(t + 1) * vocab];
        let out = &mut d_logits[t * vocab..(t + 1) * vocab];
        out.copy_from_slice(row);
        crate::linalg::softmax_in_place(out);
        loss -= out[y as usize].ln();
        out[y as usize] -= T::one();
        for v in out.iter_mut() {
            *v *= inv;
        }
    }
    loss * inv
}
