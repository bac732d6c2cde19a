//! Whole-model forward pass over a clip.

use rvid_tensor::{Scalar, Tensor, Var};

use crate::attn::{spatial, temporal, BlockKind};
use crate::error::{Error, Result};
use crate::session::Session;

use super::plan::{ModelPlan, Stage};

/// Runs the full pipeline on a normalized packed clip `[T,4,H,W]` and
/// returns the per-frame denoised outputs `[4,H,W]`. The network predicts
/// a residual that is added onto each input frame.
pub fn forward_clip<T: Scalar>(
    sess: &mut Session<T>,
    plan: &ModelPlan,
    clip: &Tensor<T>,
    fused: bool,
) -> Result<Vec<Var>> {
    if clip.rank() != 4 || clip.shape()[1] != 4 {
        return Err(Error::Invalid(format!("clip must be [T,4,H,W], got {:?}", clip.shape())));
    }
    if !clip.all_finite() {
        return Err(Error::Invalid("clip contains non-finite values".into()));
    }
    let t_frames = clip.shape()[0];
    if t_frames == 0 {
        return Err(Error::Invalid("clip has no frames".into()));
    }
    let (h, w) = (clip.shape()[2], clip.shape()[3]);
    check_extents(plan, h, w)?;
    let clip_var = sess.constant(clip.clone());
    let mut inputs = Vec::with_capacity(t_frames);
    for t in 0..t_frames {
        let f = sess.g.slice(clip_var, 0, t, 1)?;
        inputs.push(sess.g.reshape(f, vec![4, h, w])?);
    }
    let outputs = forward_frames(sess, plan, &inputs, fused)?;
    Ok(outputs)
}

/// Forward over per-frame input vars `[4,H,W]`.
pub fn forward_frames<T: Scalar>(
    sess: &mut Session<T>,
    plan: &ModelPlan,
    inputs: &[Var],
    fused: bool,
) -> Result<Vec<Var>> {
    let mut frames: Vec<Var> = Vec::with_capacity(inputs.len());
    let mut skips: Vec<Vec<Var>> = Vec::new();
    for stage in &plan.stages {
        match stage {
            Stage::Head { .. } => {
                let w = sess.param("head.w")?;
                let b = sess.param("head.b")?;
                frames = inputs
                    .iter()
                    .map(|&x| sess.g.conv2d(x, w, b))
                    .collect::<std::result::Result<_, _>>()?;
            }
            Stage::PushSkip => skips.push(frames.clone()),
            Stage::Down { index, .. } => {
                let w = sess.param(&format!("down.{index}.w"))?;
                let b = sess.param(&format!("down.{index}.b"))?;
                for f in frames.iter_mut() {
                    let pooled = sess.g.avg_pool2(*f)?;
                    *f = sess.g.conv2d(pooled, w, b)?;
                }
            }
            Stage::Up { index, .. } => {
                let w = sess.param(&format!("up.{index}.w"))?;
                let b = sess.param(&format!("up.{index}.b"))?;
                for f in frames.iter_mut() {
                    let up = sess.g.upsample_nearest2(*f)?;
                    *f = sess.g.conv2d(up, w, b)?;
                }
            }
            Stage::Merge { index, .. } => {
                let skip = skips
                    .pop()
                    .ok_or_else(|| Error::Invalid("merge without a pending skip".into()))?;
                let w = sess.param(&format!("merge.{index}.w"))?;
                let b = sess.param(&format!("merge.{index}.b"))?;
                for (f, s) in frames.iter_mut().zip(skip.into_iter()) {
                    let cat = sess.g.concat(0, &[*f, s])?;
                    *f = sess.g.conv2d(cat, w, b)?;
                }
            }
            Stage::Block(bs) => match bs.kind {
                BlockKind::Mssb => spatial::mssb_forward(sess, &mut frames, bs, fused)?,
                BlockKind::Mtsb => {
                    let cfg_t = plan.temporal_cfg(bs)?;
                    temporal::mtsb_forward(sess, &mut frames, bs, &cfg_t, fused)?;
                }
            },
            Stage::OutHead { .. } => {
                let w = sess.param("out.w")?;
                let b = sess.param("out.b")?;
                for (f, &x) in frames.iter_mut().zip(inputs.iter()) {
                    let res = sess.g.conv2d(*f, w, b)?;
                    *f = sess.g.add(x, res)?;
                }
            }
        }
    }
    Ok(frames)
}

/// Stacks per-frame outputs `[4,H,W]` into one `[T,4,H,W]` var.
pub fn stack_frames<T: Scalar>(sess: &mut Session<T>, frames: &[Var]) -> Result<Var> {
    sess.g.stack0(frames).map_err(Into::into)
}

/// The map must stay divisible by the window at every scale level.
fn check_extents(plan: &ModelPlan, h: usize, w: usize) -> Result<()> {
    let (wh, ww) = plan.cfg.window;
    let max_scale = plan.blocks().map(|b| {
        // channels encode the scale: c = d << scale
        (b.c / plan.cfg.d).trailing_zeros() as usize
    });
    let deepest = max_scale.max().unwrap_or(0);
    for s in 0..=deepest {
        let (hs, ws) = (h >> s, w >> s);
        if hs == 0 || ws == 0 || (h >> s << s) != h || (w >> s << s) != w {
            return Err(Error::Invalid(format!(
                "extents {h}x{w} do not survive {deepest} downsampling steps"
            )));
        }
        if hs % wh != 0 || ws % ww != 0 {
            return Err(Error::Invalid(format!(
                "map {hs}x{ws} at scale {s} is not divisible by the {wh}x{ww} window"
            )));
        }
    }
    Ok(())
}
