//! Multi-branch windowed attention: spatial branches (window, low-res,
//! global, neighbour) and their temporal mutual counterparts, assembled
//! into pre-norm residual units, groups and blocks.

mod common;
pub mod spatial;
pub mod temporal;
mod window;

pub use common::{map_to_tokens, repmlp_forward, tokens_to_map};
pub use window::{attn_mask, region_map};

use crate::error::{Error, Result};

/// Window geometry and branch channel widths for one block.
#[derive(Clone, Copy, Debug)]
pub struct AttentionConfig {
    /// Window extents (h, w); every map side must be a multiple.
    pub window: (usize, usize),
    /// Projected channels of the plain window branch.
    pub d: usize,
    /// Projected channels of the low-res / global / neighbour branches.
    pub d_half: usize,
    /// Head count of the plain branch.
    pub heads: usize,
    /// Neighbourhood side length in windows (odd).
    pub neighbor_factor: usize,
    /// Global-window branch at low resolution, neighbour branch at the
    /// original resolution.
    pub use_global: bool,
}

impl AttentionConfig {
    pub fn new(
        window: (usize, usize),
        d: usize,
        heads: usize,
        neighbor_factor: usize,
        use_global: bool,
    ) -> Result<Self> {
        let (h, w) = window;
        if h == 0 || w == 0 {
            return Err(Error::Config("window extents must be positive".into()));
        }
        if d == 0 || d % 2 != 0 {
            return Err(Error::Config(format!("branch width D={d} must be positive and even")));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("D={d} not divisible by heads={heads}")));
        }
        if neighbor_factor == 0 || neighbor_factor % 2 == 0 {
            return Err(Error::Config(format!("neighbor factor {neighbor_factor} must be odd")));
        }
        let cfg = AttentionConfig { window, d, d_half: d / 2, heads, neighbor_factor, use_global };
        let hh = cfg.half_heads();
        if cfg.d_half % hh != 0 {
            return Err(Error::Config(format!(
                "half width {} not divisible by its head count {hh}",
                cfg.d_half
            )));
        }
        Ok(cfg)
    }

    /// Tokens per window.
    pub fn tokens(&self) -> usize {
        self.window.0 * self.window.1
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Head count of the half-width branches; keeps the per-head dimension
    /// of the plain branch whenever it divides the half width.
    pub fn half_heads(&self) -> usize {
        (self.d_half / self.head_dim()).max(1)
    }

    /// Shift offsets used on alternating units.
    pub fn shift(&self) -> (usize, usize) {
        (self.window.0 / 2, self.window.1 / 2)
    }
}

/// Build-time ablation switches for the attention branches.
#[derive(Clone, Copy, Debug)]
pub struct BranchToggles {
    /// Low-resolution window branch.
    pub lwsa: bool,
    /// Global/neighbour spatial branch.
    pub gn_spatial: bool,
    /// Global/neighbour temporal branch.
    pub gn_temporal: bool,
}

impl Default for BranchToggles {
    fn default() -> Self {
        BranchToggles { lwsa: true, gn_spatial: true, gn_temporal: true }
    }
}

impl BranchToggles {
    /// Plain-window-only ablation (SWSA / TMA only).
    pub fn plain_only() -> Self {
        BranchToggles { lwsa: false, gn_spatial: false, gn_temporal: false }
    }

    /// Concatenated spatial branch width.
    pub fn spatial_width(&self, cfg: &AttentionConfig) -> usize {
        cfg.d
            + if self.lwsa { cfg.d_half } else { 0 }
            + if self.gn_spatial { cfg.d_half } else { 0 }
    }

    /// Concatenated temporal + spatial branch width for a temporal block.
    pub fn temporal_width(&self, cfg: &AttentionConfig, d_t: usize) -> usize {
        d_t + if self.gn_temporal { d_t / 2 } else { 0 } + self.spatial_width(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Mtsb,
    Mssb,
}

/// Everything a block forward needs to pull its parameters and run.
#[derive(Clone, Debug)]
pub struct BlockSettings {
    pub kind: BlockKind,
    pub prefix: String,
    /// Feature channels at this block's scale.
    pub c: usize,
    pub attn: AttentionConfig,
    /// Plain temporal branch width (temporal blocks only).
    pub d_t: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub toggles: BranchToggles,
    pub n_units: usize,
    /// Global attention-unit counter at block entry; odd units shift.
    pub parity_base: usize,
    /// Temporal unit counter at block entry; alternates the pairing offset.
    pub pair_base: usize,
}
