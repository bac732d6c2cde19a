//! Analytic multiply-accumulate accounting per layer: matmul `M*K*N`,
//! convolution `C_out*C_in*k^2*H*W`, attention `QK^T` and `AV` terms.
//! Poolings, norms and elementwise work are not MACs and are not counted.

use crate::attn::{AttentionConfig, BlockKind, BlockSettings};
use crate::error::Result;

use super::plan::{ModelPlan, Stage};

/// MAC count of one forward pass over a `[T,4,H,W]` packed clip.
pub fn count_macs(plan: &ModelPlan, t_frames: usize, h: usize, w: usize, fused: bool) -> Result<u64> {
    let mut total = 0u64;
    let t = t_frames as u64;
    let (mut ch, mut cw) = (h as u64, w as u64);
    for stage in &plan.stages {
        match stage {
            Stage::Head { c_out } => {
                total += t * conv_macs(4, *c_out as u64, 3, ch, cw);
            }
            Stage::OutHead { c_in } => {
                total += t * conv_macs(*c_in as u64, 4, 3, ch, cw);
            }
            Stage::Down { c_in, c_out, .. } => {
                ch /= 2;
                cw /= 2;
                total += t * conv_macs(*c_in as u64, *c_out as u64, 1, ch, cw);
            }
            Stage::Up { c_in, c_out, .. } => {
                ch *= 2;
                cw *= 2;
                total += t * conv_macs(*c_in as u64, *c_out as u64, 1, ch, cw);
            }
            Stage::Merge { c, .. } => {
                total += t * conv_macs(2 * *c as u64, *c as u64, 1, ch, cw);
            }
            Stage::PushSkip => {}
            Stage::Block(b) => {
                // temporal blocks pad odd frame counts by replication
                let bt = if b.kind == BlockKind::Mtsb { t + t % 2 } else { t };
                total += bt * block_macs(plan, b, ch, cw, fused)?;
            }
        }
    }
    Ok(total)
}

fn conv_macs(c_in: u64, c_out: u64, k: u64, h: u64, w: u64) -> u64 {
    c_out * c_in * k * k * h * w
}

fn linear_macs(tokens: u64, c_in: u64, c_out: u64) -> u64 {
    tokens * c_in * c_out
}

/// One frame's MACs through a block at map extents `h x w`.
fn block_macs(plan: &ModelPlan, b: &BlockSettings, h: u64, w: u64, fused: bool) -> Result<u64> {
    let cfg = &b.attn;
    let c = b.c as u64;
    let (wh, ww) = (cfg.window.0 as u64, cfg.window.1 as u64);
    let n = wh * ww;
    let n_w = (h / wh) * (w / ww);
    let hw = h * w;
    let mut macs = 0u64;
    for _ in 0..b.n_units {
        // spatial branches
        macs += branch_macs(cfg, c, n_w, n, n, cfg.d as u64, cfg.heads as u64, hw);
        if b.toggles.lwsa {
            macs += lwsa_macs(cfg, c, n_w, n, hw);
        }
        if b.toggles.gn_spatial {
            macs += pooled_branch_macs(cfg, c, n_w, n, hw, cfg.use_global);
        }
        let mut width = plan.cfg.toggles.spatial_width(cfg) as u64;
        if b.kind == BlockKind::Mtsb {
            let cfg_t = plan.temporal_cfg(b)?;
            macs += branch_macs(&cfg_t, c, n_w, n, n, cfg_t.d as u64, cfg_t.heads as u64, hw);
            if b.toggles.gn_temporal {
                macs += pooled_branch_macs(&cfg_t, c, n_w, n, hw, cfg_t.use_global);
            }
            width = b.toggles.temporal_width(cfg, b.d_t) as u64;
        }
        // 1x1 fusion
        macs += linear_macs(hw, width, c);
        // RepMLP: two parallel linears when unfused, one when fused
        let hidden = b.mlp_hidden as u64;
        let first = if fused { 1 } else { 2 };
        macs += first * linear_macs(hw, c, hidden);
        macs += linear_macs(hw, hidden, c);
    }
    // tail: trailing linear + 3x3 conv, or one fused 3x3 conv
    if !fused {
        macs += linear_macs(hw, c, c);
    }
    macs += conv_macs(c, c, 3, h, w);
    Ok(macs)
}

/// Plain attention branch: Q, K, V projections plus QK^T and AV.
#[allow(clippy::too_many_arguments)]
fn branch_macs(
    _cfg: &AttentionConfig,
    c: u64,
    n_w: u64,
    n_q: u64,
    n_k: u64,
    d: u64,
    heads: u64,
    hw: u64,
) -> u64 {
    let dh = d / heads;
    let proj = linear_macs(hw, c, d) * 3;
    let qk = n_w * heads * n_q * n_k * dh;
    let av = n_w * heads * n_q * n_k * dh;
    proj + qk + av
}

/// Low-res branch: keys/values from the pooled window (N/4 tokens).
fn lwsa_macs(cfg: &AttentionConfig, c: u64, n_w: u64, n: u64, hw: u64) -> u64 {
    let d = cfg.d_half as u64;
    let heads = cfg.half_heads() as u64;
    let dh = d / heads;
    let nk = n / 4;
    let proj_q = linear_macs(hw, c, d);
    let proj_kv = 2 * linear_macs(n_w * nk, c, d);
    let qk = n_w * heads * n * nk * dh;
    let av = n_w * heads * n * nk * dh;
    proj_q + proj_kv + qk + av
}

/// Global or neighbour branch: keys/values from one pooled window per
/// frame (global) or per window (neighbour).
fn pooled_branch_macs(cfg: &AttentionConfig, c: u64, n_w: u64, n: u64, hw: u64, global: bool) -> u64 {
    let d = cfg.d_half as u64;
    let heads = cfg.half_heads() as u64;
    let dh = d / heads;
    let kv_tokens = if global { n } else { n_w * n };
    let proj_q = linear_macs(hw, c, d);
    let proj_kv = 2 * linear_macs(kv_tokens, c, d);
    let qk = n_w * heads * n * n * dh;
    let av = n_w * heads * n * n * dh;
    proj_q + proj_kv + qk + av
}
