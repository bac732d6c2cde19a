//! Temporal mutual attention: each frame in a pair queries its partner's
//! windows (plain, global-pooled or neighbour-pooled), combined with a
//! spatial pass over the frame itself and fused by one 1x1 projection.

use rvid_tensor::{Scalar, Tensor, Var};

use crate::error::{Error, Result};
use crate::session::Session;

use super::common::{
    attention_core, global_window_tokens, layer_norm, merge_heads, project_heads, repmlp_forward,
    tail_forward,
};
use super::spatial::{apply_unit_output, prepare_unit_inputs, spatial_branch_concat};
use super::{AttentionConfig, BlockSettings};

/// Partner index per frame for disjoint adjacent pairs, cyclic when the
/// offset wraps. Every frame is the reference of exactly one direction and
/// never pairs with itself.
pub fn pairing(frames: usize, offset: usize) -> Result<Vec<usize>> {
    if frames == 0 || frames % 2 != 0 {
        return Err(Error::Invalid(format!("pairing needs an even frame count, got {frames}")));
    }
    let mut partner = vec![usize::MAX; frames];
    for i in 0..frames / 2 {
        let a = (offset + 2 * i) % frames;
        let b = (offset + 2 * i + 1) % frames;
        partner[a] = b;
        partner[b] = a;
    }
    Ok(partner)
}

/// Plain temporal mutual attention: queries from the reference window,
/// keys/values from the supporting window.
pub fn tma<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    ref_tokens: Var,
    sup_tokens: Var,
    cfg_t: &AttentionConfig,
    mask: Option<&Tensor<T>>,
) -> Result<Var> {
    let wq = sess.param(&format!("{prefix}.p_q"))?;
    let wk = sess.param(&format!("{prefix}.p_k"))?;
    let wv = sess.param(&format!("{prefix}.p_v"))?;
    let q = project_heads(&mut sess.g, ref_tokens, wq, cfg_t.heads)?;
    let k = project_heads(&mut sess.g, sup_tokens, wk, cfg_t.heads)?;
    let v = project_heads(&mut sess.g, sup_tokens, wv, cfg_t.heads)?;
    let out = attention_core(&mut sess.g, q, k, v, mask, cfg_t.heads)?;
    merge_heads(&mut sess.g, out, cfg_t.heads)
}

/// Global temporal branch: keys/values from the supporting frame's map
/// pooled to window size.
pub fn gtma<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    ref_tokens: Var,
    sup_maps: &[Var],
    cfg_t: &AttentionConfig,
    n_windows: usize,
) -> Result<Var> {
    let heads = cfg_t.half_heads();
    let per_frame: Vec<Var> = sup_maps
        .iter()
        .map(|&m| global_window_tokens(&mut sess.g, m, cfg_t))
        .collect::<Result<_>>()?;
    let pooled = sess.g.concat(0, &per_frame)?;
    let wq = sess.param(&format!("{prefix}.p_q"))?;
    let wk = sess.param(&format!("{prefix}.p_k"))?;
    let wv = sess.param(&format!("{prefix}.p_v"))?;
    let q = project_heads(&mut sess.g, ref_tokens, wq, heads)?;
    let k = project_heads(&mut sess.g, pooled, wk, heads)?;
    let v = project_heads(&mut sess.g, pooled, wv, heads)?;
    let k = sess.g.broadcast_windows(k, n_windows, heads)?;
    let v = sess.g.broadcast_windows(v, n_windows, heads)?;
    let out = attention_core(&mut sess.g, q, k, v, None, 1)?;
    merge_heads(&mut sess.g, out, heads)
}

/// Neighbour temporal branch: keys/values from the supporting frame's
/// zero-padded neighbourhood of each window, pooled to window size.
pub fn ntma<T: Scalar>(
    sess: &mut Session<T>,
    prefix: &str,
    ref_tokens: Var,
    sup_maps: &[Var],
    cfg_t: &AttentionConfig,
) -> Result<Var> {
    let (h, w) = cfg_t.window;
    let heads = cfg_t.half_heads();
    let per_frame: Vec<Var> = sup_maps
        .iter()
        .map(|&m| sess.g.neighbor_pool_tokens(m, h, w, cfg_t.neighbor_factor))
        .collect::<std::result::Result<_, _>>()?;
    let gathered = sess.g.concat(0, &per_frame)?;
    let wq = sess.param(&format!("{prefix}.p_q"))?;
    let wk = sess.param(&format!("{prefix}.p_k"))?;
    let wv = sess.param(&format!("{prefix}.p_v"))?;
    let q = project_heads(&mut sess.g, ref_tokens, wq, heads)?;
    let k = project_heads(&mut sess.g, gathered, wk, heads)?;
    let v = project_heads(&mut sess.g, gathered, wv, heads)?;
    let out = attention_core(&mut sess.g, q, k, v, None, 1)?;
    merge_heads(&mut sess.g, out, heads)
}

/// One MTSA unit over an even number of frames: temporal mutual branches
/// against the paired partner frame, spatial branches over the frame
/// itself, one shared 1x1 fusion, then the RepMLP stage.
pub fn mtsa_unit<T: Scalar>(
    sess: &mut Session<T>,
    frames: &mut [Var],
    s: &BlockSettings,
    cfg_t: &AttentionConfig,
    unit: usize,
    fused: bool,
) -> Result<()> {
    let t_frames = frames.len();
    let shifted = (s.parity_base + unit) % 2 == 1;
    let offset = (s.pair_base + unit) % 2;
    let partner = pairing(t_frames, offset)?;
    let up = format!("{}.u{unit}", s.prefix);
    let inputs = prepare_unit_inputs(sess, frames, &format!("{up}.ln1"), &s.attn, shifted)?;
    let n_w = inputs.n_windows;

    // per-frame token slabs in reference order and partner order
    let sup_tokens: Vec<Var> = (0..t_frames)
        .map(|t| sess.g.slice(inputs.tokens, 0, partner[t] * n_w, n_w))
        .collect::<std::result::Result<_, _>>()?;
    let sup_tokens = sess.g.concat(0, &sup_tokens)?;
    let sup_maps: Vec<Var> = (0..t_frames).map(|t| inputs.maps[partner[t]]).collect();

    let mut parts = vec![tma(
        sess,
        &format!("{up}.attn.tma"),
        inputs.tokens,
        sup_tokens,
        cfg_t,
        inputs.mask.as_ref(),
    )?];
    if s.toggles.gn_temporal {
        if cfg_t.use_global {
            parts.push(gtma(sess, &format!("{up}.attn.gtma"), inputs.tokens, &sup_maps, cfg_t, n_w)?);
        } else {
            parts.push(ntma(sess, &format!("{up}.attn.ntma"), inputs.tokens, &sup_maps, cfg_t)?);
        }
    }
    parts.push(spatial_branch_concat(
        sess,
        &format!("{up}.attn"),
        inputs.tokens,
        &inputs.maps,
        &s.attn,
        &s.toggles,
        inputs.mask.as_ref(),
        n_w,
    )?);
    let concat = sess.g.concat(2, &parts)?;
    let fw = sess.param(&format!("{up}.attn.fuse.w"))?;
    let fb = sess.param(&format!("{up}.attn.fuse.b"))?;
    let fusedv = sess.g.linear(concat, fw)?;
    let fusedv = sess.g.add_bias(fusedv, fb)?;
    apply_unit_output(sess, frames, fusedv, s.attn.window, n_w, inputs.shift)?;
    for frame in frames.iter_mut() {
        let xn = layer_norm(sess, &format!("{up}.ln2"), *frame)?;
        let y = repmlp_forward(sess, &format!("{up}.mlp"), xn, s.dropout, fused)?;
        *frame = sess.g.add(*frame, y)?;
    }
    Ok(())
}

/// Full temporal block: replicate the last frame when the count is odd,
/// run the unit group, apply the tail and block residual, crop the
/// replica.
pub fn mtsb_forward<T: Scalar>(
    sess: &mut Session<T>,
    frames: &mut Vec<Var>,
    s: &BlockSettings,
    cfg_t: &AttentionConfig,
    fused: bool,
) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::Invalid("temporal block needs at least one frame".into()));
    }
    let original = frames.len();
    if original % 2 != 0 {
        let last = *frames.last().unwrap();
        frames.push(last);
    }
    let entry = frames.clone();
    for u in 0..s.n_units {
        mtsa_unit(sess, frames, s, cfg_t, u, fused)?;
    }
    for (t, frame) in frames.iter_mut().enumerate() {
        let y = tail_forward(sess, &s.prefix, *frame, fused)?;
        *frame = sess.g.add(entry[t], y)?;
    }
    frames.truncate(original);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::pairing;

    #[test]
    fn pairing_covers_every_frame_once() {
        for t in [2usize, 4, 6, 8] {
            for offset in [0usize, 1] {
                let p = pairing(t, offset).unwrap();
                for (i, &j) in p.iter().enumerate() {
                    assert_ne!(i, j, "frame {i} paired with itself");
                    assert_eq!(p[j], i, "pairing must be an involution");
                }
            }
        }
    }

    #[test]
    fn alternating_offsets_link_all_frames() {
        // offset 0 pairs (0,1)(2,3)...; offset 1 pairs (1,2)(3,4)...(T-1,0)
        let p0 = pairing(6, 0).unwrap();
        let p1 = pairing(6, 1).unwrap();
        assert_eq!(p0, vec![1, 0, 3, 2, 5, 4]);
        assert_eq!(p1, vec![5, 2, 1, 4, 3, 0]);
    }

    #[test]
    fn odd_counts_rejected() {
        assert!(pairing(3, 0).is_err());
    }
}
