//! Plumbing shared by the spatial and temporal blocks: token views,
//! multi-head projection, the attention core, layer norm bindings, the
//! reparameterizable MLP and the block tail.

use rvid_tensor::{Graph, Scalar, Tensor, Var};

use crate::error::Result;
use crate::session::Session;

use super::AttentionConfig;

/// `[C,H,W] -> [H*W, C]` token view.
pub fn map_to_tokens<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape_of(x).to_vec();
    let flat = g.reshape(x, vec![s[0], s[1] * s[2]])?;
    Ok(g.permute(flat, &[1, 0])?)
}

/// `[H*W, C] -> [C,H,W]`.
pub fn tokens_to_map<T: Scalar>(g: &mut Graph<T>, x: Var, c: usize, h: usize, w: usize) -> Result<Var> {
    let t = g.permute(x, &[1, 0])?;
    Ok(g.reshape(t, vec![c, h, w])?)
}

/// Projects tokens and splits heads: `[B,N,C] -> [B*heads, N, d]`.
pub fn project_heads<T: Scalar>(g: &mut Graph<T>, tokens: Var, w: Var, heads: usize) -> Result<Var> {
    let p = g.linear(tokens, w)?;
    let s = g.shape_of(p).to_vec();
    let (b, n, d) = (s[0], s[1], s[2]);
    let split = g.reshape(p, vec![b, n, heads, d / heads])?;
    let perm = g.permute(split, &[0, 2, 1, 3])?;
    Ok(g.reshape(perm, vec![b * heads, n, d / heads])?)
}

/// Inverse of [`project_heads`] after attention: `[B*heads, N, d] -> [B, N, D]`.
pub fn merge_heads<T: Scalar>(g: &mut Graph<T>, x: Var, heads: usize) -> Result<Var> {
    let s = g.shape_of(x).to_vec();
    let (bh, n, d) = (s[0], s[1], s[2]);
    let b = bh / heads;
    let split = g.reshape(x, vec![b, heads, n, d])?;
    let perm = g.permute(split, &[0, 2, 1, 3])?;
    Ok(g.reshape(perm, vec![b, n, heads * d])?)
}

/// Scaled dot-product attention over per-head batches. `mask` has shape
/// `[G, N, Nk]` and is indexed by `(batch / mask_group) % G`.
pub fn attention_core<T: Scalar>(
    g: &mut Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&Tensor<T>>,
    mask_group: usize,
) -> Result<Var> {
    let d = *g.shape_of(q).last().unwrap();
    let logits = g.bmm_nt(q, k)?;
    let scaled = g.scale(logits, T::from_f64(1.0 / (d as f64).sqrt()))?;
    let attn = g.softmax_masked(scaled, mask, mask_group)?;
    Ok(g.bmm(attn, v)?)
}

/// Layer norm over channels with parameters under `prefix` (`.g`, `.b`).
pub fn layer_norm<T: Scalar>(sess: &mut Session<T>, prefix: &str, x: Var) -> Result<Var> {
    let gamma = sess.param(&format!("{prefix}.g"))?;
    let beta = sess.param(&format!("{prefix}.b"))?;
    Ok(sess.g.layer_norm_chan(x, gamma, beta)?)
}

/// Two parallel linear layers summed, GELU, dropout, and a closing linear.
/// In the fused topology the parallel pair is a single pre-summed linear.
pub fn repmlp_forward<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    x_map: Var,
    dropout: f64,
    fused: bool,
) -> Result<Var> {
    let s = sess.g.shape_of(x_map).to_vec();
    let (c, h, w) = (s[0], s[1], s[2]);
    let tokens = map_to_tokens(&mut sess.g, x_map)?;
    let pre = if fused {
        let w1 = sess.param(&format!("{prefix}.w1"))?;
        let b1 = sess.param(&format!("{prefix}.b1"))?;
        let y = sess.g.linear(tokens, w1)?;
        sess.g.add_bias(y, b1)?
    } else {
        let w1a = sess.param(&format!("{prefix}.w1a"))?;
        let b1a = sess.param(&format!("{prefix}.b1a"))?;
        let w1b = sess.param(&format!("{prefix}.w1b"))?;
        let b1b = sess.param(&format!("{prefix}.b1b"))?;
        let ya = sess.g.linear(tokens, w1a)?;
        let ya = sess.g.add_bias(ya, b1a)?;
        let yb = sess.g.linear(tokens, w1b)?;
        let yb = sess.g.add_bias(yb, b1b)?;
        sess.g.add(ya, yb)?
    };
    let act = sess.g.gelu(pre)?;
    let act = sess.g.dropout(act, dropout)?;
    let w2 = sess.param(&format!("{prefix}.w2"))?;
    let b2 = sess.param(&format!("{prefix}.b2"))?;
    let out = sess.g.linear(act, w2)?;
    let out = sess.g.add_bias(out, b2)?;
    tokens_to_map(&mut sess.g, out, c, h, w)
}

/// Group tail: trailing linear then the 3x3 convolution, or the single
/// fused 3x3 convolution. No nonlinearity sits between the two stages.
pub fn tail_forward<T: Scalar>(sess: &mut Session<T>, prefix: &str, x_map: Var, fused: bool) -> Result<Var> {
    if fused {
        let w = sess.param(&format!("{prefix}.tail.fused.w"))?;
        let b = sess.param(&format!("{prefix}.tail.fused.b"))?;
        return Ok(sess.g.conv2d(x_map, w, b)?);
    }
    let s = sess.g.shape_of(x_map).to_vec();
    let (c, h, w) = (s[0], s[1], s[2]);
    let lw = sess.param(&format!("{prefix}.tail.lin.w"))?;
    let lb = sess.param(&format!("{prefix}.tail.lin.b"))?;
    let tokens = map_to_tokens(&mut sess.g, x_map)?;
    let lin = sess.g.linear(tokens, lw)?;
    let lin = sess.g.add_bias(lin, lb)?;
    let mid = tokens_to_map(&mut sess.g, lin, c, h, w)?;
    let cw = sess.param(&format!("{prefix}.tail.conv.w"))?;
    let cb = sess.param(&format!("{prefix}.tail.conv.b"))?;
    Ok(sess.g.conv2d(mid, cw, cb)?)
}

/// Pools a whole map to window size and returns its token row `[1, N, C]`.
pub fn global_window_tokens<T: Scalar>(g: &mut Graph<T>, map: Var, cfg: &AttentionConfig) -> Result<Var> {
    let (h, w) = cfg.window;
    let pooled = g.adaptive_avg_pool(map, h, w)?;
    Ok(g.window_tokens(pooled, h, w)?)
}
