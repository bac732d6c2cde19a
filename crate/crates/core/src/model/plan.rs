//! Staged model description: the single source of truth for parameter
//! names and shapes, shared by initialization, the forward pass, fusion
//! and MAC accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvid_tensor::Tensor;

use crate::attn::{AttentionConfig, BlockKind, BlockSettings};
use crate::error::Result;
use crate::params::{fnv1a64, ParamStore};

use super::ModelConfig;

#[derive(Clone, Debug)]
pub enum Stage {
    /// 3x3 feature head on the packed input.
    Head { c_out: usize },
    /// Remember the current feature for a later skip merge.
    PushSkip,
    /// Strided 2x2 mean pool then 1x1 channel expansion.
    Down { index: usize, c_in: usize, c_out: usize },
    /// Nearest 2x upsample then 1x1 channel reduction.
    Up { index: usize, c_in: usize, c_out: usize },
    /// Concatenate the popped skip and merge with a 1x1 convolution.
    Merge { index: usize, c: usize },
    Block(Box<BlockSettings>),
    /// 3x3 output head predicting a residual over the input frames.
    OutHead { c_in: usize },
}

#[derive(Clone, Debug)]
pub struct ModelPlan {
    pub cfg: ModelConfig,
    pub stages: Vec<Stage>,
    pub base_channels: usize,
}

impl ModelPlan {
    pub fn blocks(&self) -> impl Iterator<Item = &BlockSettings> {
        self.stages.iter().filter_map(|s| match s {
            Stage::Block(b) => Some(b.as_ref()),
            _ => None,
        })
    }

    /// Reconstruction blocks only (prefix `rec.`), in order.
    pub fn reconstruction_kinds(&self) -> Vec<BlockKind> {
        self.blocks()
            .filter(|b| b.prefix.starts_with("rec."))
            .map(|b| b.kind)
            .collect()
    }

    /// Temporal branch widths for a block.
    pub fn temporal_cfg(&self, b: &BlockSettings) -> Result<AttentionConfig> {
        AttentionConfig::new(
            self.cfg.window,
            self.cfg.d_t,
            self.cfg.heads,
            self.cfg.neighbor_factor,
            b.attn.use_global,
        )
    }
}

/// Lays the blocks of the reconstruction module onto the U-shaped scale
/// schedule (temporal blocks at even positions, spatial at odd), appends
/// the refinement blocks, and wires the scale transitions.
pub fn plan_model(cfg: &ModelConfig) -> Result<ModelPlan> {
    // surface invalid width/head combinations early
    AttentionConfig::new(cfg.window, cfg.d, cfg.heads, cfg.neighbor_factor, false)?;
    AttentionConfig::new(cfg.window, cfg.d_t, cfg.heads, cfg.neighbor_factor, false)?;
    let groups = cfg.scale_groups()?;
    let c0 = cfg.channels_at(0);
    let mut stages = vec![Stage::Head { c_out: c0 }];
    let mut block_index = 0usize;
    let mut parity = 0usize;
    let mut pair = 0usize;
    let mut transition = 0usize;
    let block = |kind: BlockKind, scale: usize, prefix: String, parity: &mut usize, pair: &mut usize| {
        let use_global = scale > 0;
        let attn = AttentionConfig::new(cfg.window, cfg.d, cfg.heads, cfg.neighbor_factor, use_global)
            .expect("validated above");
        let n_units = match kind {
            BlockKind::Mtsb => cfg.n_t,
            BlockKind::Mssb => cfg.n_s,
        };
        let c = cfg.channels_at(scale);
        let settings = BlockSettings {
            kind,
            prefix,
            c,
            attn,
            d_t: cfg.d_t,
            mlp_hidden: cfg.mlp_ratio * c,
            dropout: cfg.dropout,
            toggles: cfg.toggles,
            n_units,
            parity_base: *parity,
            pair_base: *pair,
        };
        *parity += n_units;
        if kind == BlockKind::Mtsb {
            *pair += n_units;
        }
        Stage::Block(Box::new(settings))
    };
    for (gi, &(scale, count)) in groups.iter().enumerate() {
        for _ in 0..count {
            let kind = if block_index % 2 == 0 { BlockKind::Mtsb } else { BlockKind::Mssb };
            stages.push(block(kind, scale, format!("rec.{block_index}"), &mut parity, &mut pair));
            block_index += 1;
        }
        if gi + 1 < groups.len() {
            let next_scale = groups[gi + 1].0;
            if next_scale > scale {
                stages.push(Stage::PushSkip);
                stages.push(Stage::Down {
                    index: transition,
                    c_in: cfg.channels_at(scale),
                    c_out: cfg.channels_at(next_scale),
                });
                transition += 1;
            } else if next_scale < scale {
                stages.push(Stage::Up {
                    index: transition,
                    c_in: cfg.channels_at(scale),
                    c_out: cfg.channels_at(next_scale),
                });
                stages.push(Stage::Merge { index: transition, c: cfg.channels_at(next_scale) });
                transition += 1;
            }
        }
    }
    for j in 0..cfg.m_sr {
        stages.push(block(BlockKind::Mssb, 0, format!("ref.{j}"), &mut parity, &mut pair));
    }
    stages.push(Stage::OutHead { c_in: c0 });
    Ok(ModelPlan { cfg: cfg.clone(), stages, base_channels: c0 })
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Uniform in +-1/sqrt(fan_in).
    Uniform { fan_in: usize },
    /// Uniform scaled down 10x; keeps residual paths dominant early on.
    SmallUniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Every parameter of the model in its training or fused topology.
pub fn param_specs(plan: &ModelPlan, fused: bool) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        specs.push(ParamSpec { name, shape, init });
    };
    for stage in &plan.stages {
        match stage {
            Stage::Head { c_out } => {
                push("head.w".into(), vec![*c_out, 4, 3, 3], Init::Uniform { fan_in: 4 * 9 });
                push("head.b".into(), vec![*c_out], Init::Zeros);
            }
            Stage::OutHead { c_in } => {
                push("out.w".into(), vec![4, *c_in, 3, 3], Init::SmallUniform { fan_in: c_in * 9 });
                push("out.b".into(), vec![4], Init::Zeros);
            }
            Stage::Down { index, c_in, c_out } => {
                push(format!("down.{index}.w"), vec![*c_out, *c_in, 1, 1], Init::Uniform { fan_in: *c_in });
                push(format!("down.{index}.b"), vec![*c_out], Init::Zeros);
            }
            Stage::Up { index, c_in, c_out } => {
                push(format!("up.{index}.w"), vec![*c_out, *c_in, 1, 1], Init::Uniform { fan_in: *c_in });
                push(format!("up.{index}.b"), vec![*c_out], Init::Zeros);
            }
            Stage::Merge { index, c } => {
                push(format!("merge.{index}.w"), vec![*c, 2 * c, 1, 1], Init::Uniform { fan_in: 2 * c });
                push(format!("merge.{index}.b"), vec![*c], Init::Zeros);
            }
            Stage::PushSkip => {}
            Stage::Block(b) => block_specs(plan, b, fused, &mut push),
        }
    }
    specs
}

fn block_specs(
    plan: &ModelPlan,
    b: &BlockSettings,
    fused: bool,
    push: &mut impl FnMut(String, Vec<usize>, Init),
) {
    let c = b.c;
    let cfg = &b.attn;
    let hidden = b.mlp_hidden;
    for u in 0..b.n_units {
        let up = format!("{}.u{u}", b.prefix);
        for ln in ["ln1", "ln2"] {
            push(format!("{up}.{ln}.g"), vec![c], Init::Ones);
            push(format!("{up}.{ln}.b"), vec![c], Init::Zeros);
        }
        let mut width = 0usize;
        if b.kind == BlockKind::Mtsb {
            for n in ["p_q", "p_k", "p_v"] {
                push(format!("{up}.attn.tma.{n}"), vec![c, b.d_t], Init::Uniform { fan_in: c });
            }
            width += b.d_t;
            if b.toggles.gn_temporal {
                let name = if cfg.use_global { "gtma" } else { "ntma" };
                for n in ["p_q", "p_k", "p_v"] {
                    push(format!("{up}.attn.{name}.{n}"), vec![c, b.d_t / 2], Init::Uniform { fan_in: c });
                }
                width += b.d_t / 2;
            }
        }
        for n in ["p_q", "p_k", "p_v"] {
            push(format!("{up}.attn.swsa.{n}"), vec![c, cfg.d], Init::Uniform { fan_in: c });
        }
        width += cfg.d;
        if b.toggles.lwsa {
            for n in ["p_q", "p_k", "p_v"] {
                push(format!("{up}.attn.lwsa.{n}"), vec![c, cfg.d_half], Init::Uniform { fan_in: c });
            }
            width += cfg.d_half;
        }
        if b.toggles.gn_spatial {
            let name = if cfg.use_global { "gwsa" } else { "nwsa" };
            for n in ["p_q", "p_k", "p_v"] {
                push(format!("{up}.attn.{name}.{n}"), vec![c, cfg.d_half], Init::Uniform { fan_in: c });
            }
            width += cfg.d_half;
        }
        push(format!("{up}.attn.fuse.w"), vec![width, c], Init::SmallUniform { fan_in: width });
        push(format!("{up}.attn.fuse.b"), vec![c], Init::Zeros);
        if fused {
            push(format!("{up}.mlp.w1"), vec![c, hidden], Init::Uniform { fan_in: c });
            push(format!("{up}.mlp.b1"), vec![hidden], Init::Zeros);
        } else {
            for n in ["w1a", "w1b"] {
                push(format!("{up}.mlp.{n}"), vec![c, hidden], Init::Uniform { fan_in: c });
            }
            for n in ["b1a", "b1b"] {
                push(format!("{up}.mlp.{n}"), vec![hidden], Init::Zeros);
            }
        }
        push(format!("{up}.mlp.w2"), vec![hidden, c], Init::Uniform { fan_in: hidden });
        push(format!("{up}.mlp.b2"), vec![c], Init::Zeros);
    }
    let tail = format!("{}.tail", b.prefix);
    if fused {
        push(format!("{tail}.fused.w"), vec![c, c, 3, 3], Init::SmallUniform { fan_in: c * 9 });
        push(format!("{tail}.fused.b"), vec![c], Init::Zeros);
    } else {
        push(format!("{tail}.lin.w"), vec![c, c], Init::SmallUniform { fan_in: c });
        push(format!("{tail}.lin.b"), vec![c], Init::Zeros);
        push(format!("{tail}.conv.w"), vec![c, c, 3, 3], Init::SmallUniform { fan_in: c * 9 });
        push(format!("{tail}.conv.b"), vec![c], Init::Zeros);
    }
    let _ = plan;
}

/// Seeded parameter initialization. Each tensor draws from its own stream
/// keyed by name, so the result does not depend on enumeration order.
pub fn init_params(plan: &ModelPlan, seed: u64) -> Result<ParamStore<f32>> {
    let mut store = ParamStore::new();
    for spec in param_specs(plan, false) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(spec.name.as_bytes()));
        let t = match spec.init {
            Init::Uniform { fan_in } => {
                let s = 1.0 / (fan_in as f32).sqrt();
                Tensor::from_fn(spec.shape, |_| rng.random_range(-s..s))
            }
            Init::SmallUniform { fan_in } => {
                let s = 0.1 / (fan_in as f32).sqrt();
                Tensor::from_fn(spec.shape, |_| rng.random_range(-s..s))
            }
            Init::Ones => Tensor::full(spec.shape, 1.0),
            Init::Zeros => Tensor::zeros(spec.shape),
        };
        store.insert(spec.name, t)?;
    }
    Ok(store)
}

/// Checks a loaded store against the expected parameter set.
pub fn validate_store(plan: &ModelPlan, store: &ParamStore<f32>, fused: bool) -> Result<()> {
    let specs = param_specs(plan, fused);
    if specs.len() != store.len() {
        return Err(crate::error::Error::Config(format!(
            "store has {} parameters, model expects {} ({} topology)",
            store.len(),
            specs.len(),
            if fused { "fused" } else { "training" }
        )));
    }
    for spec in specs {
        let p = store.get(&spec.name)?;
        if p.value.shape() != spec.shape.as_slice() {
            return Err(crate::error::Error::Config(format!(
                "parameter `{}` has shape {:?}, expected {:?}",
                spec.name,
                p.value.shape(),
                spec.shape
            )));
        }
    }
    Ok(())
}

/// Heuristic: does this store hold the fused topology?
pub fn store_is_fused(store: &ParamStore<f32>) -> bool {
    store.names().any(|n| n.ends_with(".tail.fused.w"))
}
