//! Model assembly: configuration presets, the staged plan, the forward
//! pass, losses and analytic MAC accounting.

pub mod forward;
pub mod loss;
pub mod macs;
pub mod plan;

pub use forward::{forward_clip, stack_frames};
pub use loss::{supervised_loss, unsupervised_loss, UnsupLoss};
pub use macs::count_macs;
pub use plan::{init_params, param_specs, plan_model, ModelPlan, ParamSpec, Stage};

use crate::attn::BranchToggles;
use crate::error::{Error, Result};

/// Named model sizes. The four published sizes share `heads = 6`; the
/// micro size exists for desk-scale tests and training runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    T,
    S,
    M,
    L,
    Micro,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "T" | "t" => Preset::T,
            "S" | "s" => Preset::S,
            "M" | "m" => Preset::M,
            "L" | "l" => Preset::L,
            "micro" | "Micro" | "u" => Preset::Micro,
            other => return Err(Error::Config(format!("unknown preset `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::T => "T",
            Preset::S => "S",
            Preset::M => "M",
            Preset::L => "L",
            Preset::Micro => "micro",
        }
    }

    pub const ALL: [Preset; 5] = [Preset::T, Preset::S, Preset::M, Preset::L, Preset::Micro];
}

/// Full model hyper-parameters: channel widths of the temporal and spatial
/// projections, block counts of the reconstruction and refinement
/// modules, units per group, head count, and the desk-scale knobs.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub d_t: usize,
    pub d: usize,
    pub m_tr: usize,
    pub m_sr: usize,
    pub n_t: usize,
    pub n_s: usize,
    pub heads: usize,
    pub window: (usize, usize),
    pub neighbor_factor: usize,
    pub mlp_ratio: usize,
    pub dropout: f64,
    pub toggles: BranchToggles,
}

impl ModelConfig {
    pub fn preset(p: Preset) -> Self {
        let (d_t, d, m_tr, m_sr, n_t, n_s, heads) = match p {
            Preset::T => (24, 24, 14, 2, 1, 1, 6),
            Preset::S => (24, 30, 14, 3, 2, 1, 6),
            Preset::M => (24, 30, 14, 4, 4, 2, 6),
            Preset::L => (84, 108, 14, 4, 4, 2, 6),
            Preset::Micro => (12, 12, 4, 2, 1, 1, 2),
        };
        ModelConfig {
            d_t,
            d,
            m_tr,
            m_sr,
            n_t,
            n_s,
            heads,
            window: (8, 8),
            neighbor_factor: 3,
            mlp_ratio: 2,
            dropout: 0.0,
            toggles: BranchToggles::default(),
        }
    }

    pub fn micro() -> Self {
        Self::preset(Preset::Micro)
    }

    /// Groups of `(scale level, block count)` for the reconstruction
    /// module; the two published depths get their fixed splits, other
    /// depths fall back to a symmetric U.
    pub fn scale_groups(&self) -> Result<Vec<(usize, usize)>> {
        let m = self.m_tr;
        let groups: Vec<(usize, usize)> = match m {
            0 => return Err(Error::Config("m_tr must be at least 1".into())),
            14 => vec![(0, 3), (1, 3), (2, 2), (1, 3), (0, 3)],
            4 => vec![(0, 1), (1, 2), (0, 1)],
            1 | 2 => vec![(0, m)],
            3..=9 => {
                let a = (m / 4).max(1);
                vec![(0, a), (1, m - 2 * a), (0, a)]
            }
            _ => {
                let a = (3 * m / 14).max(1);
                let c = m as i64 - 4 * a as i64;
                if c < 1 {
                    return Err(Error::Config(format!("no valid scale schedule for m_tr={m}")));
                }
                vec![(0, a), (1, a), (2, c as usize), (1, a), (0, a)]
            }
        };
        let total: usize = groups.iter().map(|&(_, n)| n).sum();
        if total != m || groups.iter().any(|&(_, n)| n == 0) {
            return Err(Error::Config(format!("invalid scale schedule for m_tr={m}: {groups:?}")));
        }
        Ok(groups)
    }

    /// Feature channels at a scale level.
    pub fn channels_at(&self, scale: usize) -> usize {
        self.d << scale
    }
}
