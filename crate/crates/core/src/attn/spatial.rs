//! Spatial attention branches and their assembly: plain shifted-window
//! attention plus low-resolution, global-window and neighbour-window
//! branches, fused by a 1x1 projection into pre-norm residual units,
//! stacked into groups and capped by the convolution tail.

use rvid_tensor::{Scalar, Tensor, Var};

use crate::error::{Error, Result};
use crate::session::Session;

use super::common::{
    attention_core, global_window_tokens, layer_norm, merge_heads, project_heads, repmlp_forward,
    tail_forward,
};
use super::window::attn_mask;
use super::{AttentionConfig, BlockSettings, BranchToggles};

/// Plain window self-attention over `[B, N, C]` tokens -> `[B, N, D]`.
/// `mask_windows` is the number of mask slabs (windows per frame).
pub fn swsa<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    tokens: Var,
    cfg: &AttentionConfig,
    mask: Option<&Tensor<T>>,
) -> Result<Var> {
    let wq = sess.param(&format!("{prefix}.p_q"))?;
    let wk = sess.param(&format!("{prefix}.p_k"))?;
    let wv = sess.param(&format!("{prefix}.p_v"))?;
    let q = project_heads(&mut sess.g, tokens, wq, cfg.heads)?;
    let k = project_heads(&mut sess.g, tokens, wk, cfg.heads)?;
    let v = project_heads(&mut sess.g, tokens, wv, cfg.heads)?;
    let out = attention_core(&mut sess.g, q, k, v, mask, cfg.heads)?;
    merge_heads(&mut sess.g, out, cfg.heads)
}

/// Low-resolution window branch: keys/values from the 2x2-pooled window,
/// queries from the full window. Attention maps are `N x N/4`.
pub fn lwsa<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    tokens: Var,
    cfg: &AttentionConfig,
) -> Result<Var> {
    let (h, w) = cfg.window;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Config(format!("low-res branch needs even window, got {h}x{w}")));
    }
    let heads = cfg.half_heads();
    let pooled = sess.g.tokens_pool2(tokens, h, w)?;
    let wq = sess.param(&format!("{prefix}.p_q"))?;
    let wk = sess.param(&format!("{prefix}.p_k"))?;
    let wv = sess.param(&format!("{prefix}.p_v"))?;
    let q = project_heads(&mut sess.g, tokens, wq, heads)?;
    let k = project_heads(&mut sess.g, pooled, wk, heads)?;
    let v = project_heads(&mut sess.g, pooled, wv, heads)?;
    let out = attention_core(&mut sess.g, q, k, v, None, 1)?;
    merge_heads(&mut sess.g, out, heads)
}

/// Global-window branch: keys/values from the whole map pooled to window
/// size, shared across that frame's windows.
pub fn gwsa<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    tokens: Var,
    source_maps: &[Var],
    cfg: &AttentionConfig,
    n_windows: usize,
) -> Result<Var> {
    let heads = cfg.half_heads();
    let per_frame: Vec<Var> = source_maps
        .iter()
        .map(|&m| global_window_tokens(&mut sess.g, m, cfg))
        .collect::<Result<_>>()?;
    let pooled = sess.g.concat(0, &per_frame)?;
    let wq = sess.param(&format!("{prefix}.p_q"))?;
    let wk = sess.param(&format!("{prefix}.p_k"))?;
    let wv = sess.param(&format!("{prefix}.p_v"))?;
    let q = project_heads(&mut sess.g, tokens, wq, heads)?;
    let k = project_heads(&mut sess.g, pooled, wk, heads)?;
    let v = project_heads(&mut sess.g, pooled, wv, heads)?;
    let k = sess.g.broadcast_windows(k, n_windows, heads)?;
    let v = sess.g.broadcast_windows(v, n_windows, heads)?;
    let out = attention_core(&mut sess.g, q, k, v, None, 1)?;
    merge_heads(&mut sess.g, out, heads)
}

/// Neighbour-window branch: keys/values from the zero-padded `f*h x f*w`
/// neighbourhood of each window, pooled back to window size.
pub fn nwsa<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    tokens: Var,
    source_maps: &[Var],
    cfg: &AttentionConfig,
) -> Result<Var> {
    let (h, w) = cfg.window;
    let heads = cfg.half_heads();
    let per_frame: Vec<Var> = source_maps
        .iter()
        .map(|&m| sess.g.neighbor_pool_tokens(m, h, w, cfg.neighbor_factor))
        .collect::<std::result::Result<_, _>>()?;
    let gathered = sess.g.concat(0, &per_frame)?;
    let wq = sess.param(&format!("{prefix}.p_q"))?;
    let wk = sess.param(&format!("{prefix}.p_k"))?;
    let wv = sess.param(&format!("{prefix}.p_v"))?;
    let q = project_heads(&mut sess.g, tokens, wq, heads)?;
    let k = project_heads(&mut sess.g, gathered, wk, heads)?;
    let v = project_heads(&mut sess.g, gathered, wv, heads)?;
    let out = attention_core(&mut sess.g, q, k, v, None, 1)?;
    merge_heads(&mut sess.g, out, heads)
}

/// Concatenated outputs of the enabled spatial branches for one unit.
/// `tokens` are the windowed tokens of all frames, `maps` the shifted
/// per-frame feature maps they came from.
pub fn spatial_branch_concat<T: Scalar>(
    sess: &mut Session<T>,
    attn_prefix: &str,
    tokens: Var,
    maps: &[Var],
    cfg: &AttentionConfig,
    toggles: &BranchToggles,
    mask: Option<&Tensor<T>>,
    n_windows: usize,
) -> Result<Var> {
    let mut parts = vec![swsa(sess, &format!("{attn_prefix}.swsa"), tokens, cfg, mask)?];
    if toggles.lwsa {
        parts.push(lwsa(sess, &format!("{attn_prefix}.lwsa"), tokens, cfg)?);
    }
    if toggles.gn_spatial {
        if cfg.use_global {
            parts.push(gwsa(sess, &format!("{attn_prefix}.gwsa"), tokens, maps, cfg, n_windows)?);
        } else {
            parts.push(nwsa(sess, &format!("{attn_prefix}.nwsa"), tokens, maps, cfg)?);
        }
    }
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        sess.g.concat(2, &parts).map_err(Into::into)
    }
}

/// Per-frame layer norm, optional cyclic shift, and windowing for one unit.
/// Returns the shifted maps, their stacked window tokens and the mask.
pub(super) struct UnitInputs<T: Scalar> {
    pub maps: Vec<Var>,
    pub tokens: Var,
    pub mask: Option<Tensor<T>>,
    pub n_windows: usize,
    pub shift: (usize, usize),
}

pub(super) fn prepare_unit_inputs<T: Scalar>(
    sess: &mut Session<T>,
    frames: &[Var],
    ln_prefix: &str,
    cfg: &AttentionConfig,
    shifted: bool,
) -> Result<UnitInputs<T>> {
    let s = sess.g.shape_of(frames[0]).to_vec();
    let (map_h, map_w) = (s[1], s[2]);
    let (h, w) = cfg.window;
    if map_h % h != 0 || map_w % w != 0 {
        return Err(Error::Invalid(format!(
            "map {map_h}x{map_w} not divisible by window {h}x{w}"
        )));
    }
    let (sy, sx) = if shifted { cfg.shift() } else { (0, 0) };
    let mask = if shifted { attn_mask::<T>(map_h, map_w, h, w, sy, sx) } else { None };
    let mut maps = Vec::with_capacity(frames.len());
    let mut tokens = Vec::with_capacity(frames.len());
    for &f in frames {
        let xn = layer_norm(sess, ln_prefix, f)?;
        let xs = if shifted { sess.g.cyclic_shift(xn, sy as i64, sx as i64)? } else { xn };
        maps.push(xs);
        tokens.push(sess.g.window_tokens(xs, h, w)?);
    }
    let tokens = sess.g.concat(0, &tokens)?;
    let n_windows = (map_h / h) * (map_w / w);
    Ok(UnitInputs { maps, tokens, mask, n_windows, shift: (sy, sx) })
}

/// Splits fused unit output back into per-frame maps, undoes the shift and
/// adds the residual.
pub(super) fn apply_unit_output<T: Scalar>(
    sess: &mut Session<T>,
    frames: &mut [Var],
    fused_tokens: Var,
    window: (usize, usize),
    n_windows: usize,
    shift: (usize, usize),
) -> Result<()> {
    let s = sess.g.shape_of(frames[0]).to_vec();
    let (c, map_h, map_w) = (s[0], s[1], s[2]);
    for (t, frame) in frames.iter_mut().enumerate() {
        let part = sess.g.slice(fused_tokens, 0, t * n_windows, n_windows)?;
        let map = sess.g.window_untokens(part, c, map_h, map_w, window.0, window.1)?;
        let map = if shift != (0, 0) {
            sess.g.cyclic_shift(map, -(shift.0 as i64), -(shift.1 as i64))?
        } else {
            map
        };
        *frame = sess.g.add(*frame, map)?;
    }
    Ok(())
}

/// One MSSA unit: pre-norm attention with residual, then pre-norm RepMLP
/// with residual.
pub fn mssa_unit<T: Scalar>(
    sess: &mut Session<T>,
    frames: &mut [Var],
    s: &BlockSettings,
    unit: usize,
    fused: bool,
) -> Result<()> {
    let shifted = (s.parity_base + unit) % 2 == 1;
    let up = format!("{}.u{unit}", s.prefix);
    let inputs = prepare_unit_inputs(sess, frames, &format!("{up}.ln1"), &s.attn, shifted)?;
    let concat = spatial_branch_concat(
        sess,
        &format!("{up}.attn"),
        inputs.tokens,
        &inputs.maps,
        &s.attn,
        &s.toggles,
        inputs.mask.as_ref(),
        inputs.n_windows,
    )?;
    let fw = sess.param(&format!("{up}.attn.fuse.w"))?;
    let fb = sess.param(&format!("{up}.attn.fuse.b"))?;
    let fusedv = sess.g.linear(concat, fw)?;
    let fusedv = sess.g.add_bias(fusedv, fb)?;
    apply_unit_output(sess, frames, fusedv, s.attn.window, inputs.n_windows, inputs.shift)?;
    for frame in frames.iter_mut() {
        let xn = layer_norm(sess, &format!("{up}.ln2"), *frame)?;
        let y = repmlp_forward(sess, &format!("{up}.mlp"), xn, s.dropout, fused)?;
        *frame = sess.g.add(*frame, y)?;
    }
    Ok(())
}

/// MSSA group: `n_units` sequential units (odd units shifted), closed by
/// the trailing linear which the convolution tail later fuses with.
pub fn mssag<T: Scalar>(
    sess: &mut Session<T>,
    frames: &mut [Var],
    s: &BlockSettings,
    fused: bool,
) -> Result<()> {
    for u in 0..s.n_units {
        mssa_unit(sess, frames, s, u, fused)?;
    }
    Ok(())
}

/// Full spatial block: group, tail convolution, block residual.
pub fn mssb_forward<T: Scalar>(
    sess: &mut Session<T>,
    frames: &mut [Var],
    s: &BlockSettings,
    fused: bool,
) -> Result<()> {
    let entry = frames.to_vec();
    mssag(sess, frames, s, fused)?;
    for (t, frame) in frames.iter_mut().enumerate() {
        let y = tail_forward(sess, &s.prefix, *frame, fused)?;
        *frame = sess.g.add(entry[t], y)?;
    }
    Ok(())
}

/// Dense single-window attention used by tests as the independent oracle
/// path: explicit loops over tokens, no batching, no heads.
pub fn dense_attention_oracle(
    q: &[Vec<f64>],
    k: &[Vec<f64>],
    v: &[Vec<f64>],
    scale_dim: usize,
) -> Vec<Vec<f64>> {
    let n = q.len();
    let nk = k.len();
    let scale = 1.0 / (scale_dim as f64).sqrt();
    let mut out = vec![vec![0.0; v[0].len()]; n];
    for i in 0..n {
        let mut logits = vec![0.0; nk];
        for j in 0..nk {
            let dot: f64 = q[i].iter().zip(k[j].iter()).map(|(a, b)| a * b).sum();
            logits[j] = dot * scale;
        }
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..nk {
            let a = exps[j] / sum;
            for d in 0..v[0].len() {
                out[i][d] += a * v[j][d];
            }
        }
    }
    out
}
