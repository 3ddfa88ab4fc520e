use alloc::vec::Vec;

use crate::diff::{Graph, Segment, Var};
use crate::{Error, Result};

fn check_heads(g: &Graph, x: Var, heads: usize) -> Result<usize> {
    let d = g.value(x).dims2().1;
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape("multi_head_attention", &[d], &[heads]));
    }
    Ok(d / heads)
}

/// `softmax(q_h k_hᵀ / √d_k) v_h` for every head, heads concatenated.
/// `q: n×D`, `k, v: m×D`; every query row sees every key row.
pub fn multi_head_attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    let dk = check_heads(g, q, heads)?;
    let scale = 1.0 / libm::sqrt(dk as f64);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dk, dk)?,
                g.slice_cols(k, h * dk, dk)?,
                g.slice_cols(v, h * dk, dk)?,
            )
        };
        let s = g.matmul_bt(qh, kh)?;
        let s = g.scale(s, scale)?;
        let p = g.softmax(s)?;
        outs.push(g.matmul(p, vh)?);
    }
    if heads == 1 {
        Ok(outs[0])
    } else {
        g.concat_cols(&outs)
    }
}

/// Multi-head attention restricted to each segment of rows.
pub fn segment_multi_head_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    segments: &[Segment],
) -> Result<Var> {
    let dk = check_heads(g, q, heads)?;
    let scale = 1.0 / libm::sqrt(dk as f64);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dk, dk)?,
                g.slice_cols(k, h * dk, dk)?,
                g.slice_cols(v, h * dk, dk)?,
            )
        };
        outs.push(g.segment_attention(qh, kh, vh, segments, scale)?);
    }
    if heads == 1 {
        Ok(outs[0])
    } else {
        g.concat_cols(&outs)
    }
}

/// Token queries against a learnable key-value set:
/// `softmax(x W_q (V W_k)ᵀ / √d_k) V W_v`.
pub fn cross_attention(
    g: &mut Graph,
    x: Var,
    vectors: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    heads: usize,
) -> Result<Var> {
    let q = g.matmul(x, wq)?;
    let k = g.matmul(vectors, wk)?;
    let v = g.matmul(vectors, wv)?;
    multi_head_attention(g, q, k, v, heads)
}

/// Row-stochastic attention weights of [`cross_attention`] for one head,
/// exposed for diagnostics.
pub fn attention_weights(g: &mut Graph, q: Var, k: Var) -> Result<Var> {
    let dk = g.value(q).dims2().1;
    let s = g.matmul_bt(q, k)?;
    let s = g.scale(s, 1.0 / libm::sqrt(dk as f64))?;
    g.softmax(s)
}
