//! Supervised and self-supervised training losses.

use rvid_tensor::{Scalar, Tensor, Var};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::raw::{neighbor_positions, subsample_with, toy_isp_graph};
use crate::session::Session;

use super::forward::{forward_clip, stack_frames};
use super::plan::ModelPlan;

/// L1 on the raw outputs plus `beta1` times L1 on the ISP outputs. The ISP
/// is analytic and parameter-free, so nothing of it enters the update.
pub fn supervised_loss<T: Scalar>(
    sess: &mut Session<T>,
    plan: &ModelPlan,
    noisy: &Tensor<T>,
    clean: &Tensor<T>,
    beta1: f64,
    fused: bool,
) -> Result<Var> {
    if noisy.shape() != clean.shape() {
        return Err(Error::Invalid(format!(
            "noisy {:?} and clean {:?} shapes differ",
            noisy.shape(),
            clean.shape()
        )));
    }
    let outputs = forward_clip(sess, plan, noisy, fused)?;
    let out = stack_frames(sess, &outputs)?;
    let target = sess.constant(clean.clone());
    let raw_l1 = sess.g.mean_abs_diff(out, target)?;
    if beta1 == 0.0 {
        return Ok(raw_l1);
    }
    let mut srgb_out = Vec::with_capacity(outputs.len());
    let mut srgb_gt = Vec::with_capacity(outputs.len());
    let t_frames = clean.shape()[0];
    let (h, w) = (clean.shape()[2], clean.shape()[3]);
    for (t, &o) in outputs.iter().enumerate() {
        srgb_out.push(toy_isp_graph(&mut sess.g, o)?);
        let gt = sess.g.slice(target, 0, t, 1)?;
        let gt = sess.g.reshape(gt, vec![4, h, w])?;
        srgb_gt.push(toy_isp_graph(&mut sess.g, gt)?);
    }
    let _ = t_frames;
    let so = sess.g.stack0(&srgb_out)?;
    let sg = sess.g.stack0(&srgb_gt)?;
    let srgb_l1 = sess.g.mean_abs_diff(so, sg)?;
    let weighted = sess.g.scale(srgb_l1, T::from_f64(beta1))?;
    Ok(sess.g.add(raw_l1, weighted)?)
}

/// Pieces of the self-supervised objective, exposed so tests can check the
/// structural identities separately.
pub struct UnsupLoss {
    pub loss: Var,
    pub l_rec: Var,
    pub l_reg: Var,
}

/// Neighbour-subsample loss: the network maps one sub-frame onto the
/// other, with a regularizer anchored to a gradient-free full-frame pass.
///
/// `L = ||f(s1) - s2||^2 + beta2 * ||f(s1) - s2 - (g(x)_1 - g(x)_2)||^2`
pub fn unsupervised_loss<T: Scalar>(
    sess: &mut Session<T>,
    plan: &ModelPlan,
    store: &ParamStore<T>,
    noisy: &Tensor<T>,
    seed: u64,
    beta2: f64,
    fused: bool,
) -> Result<UnsupLoss> {
    if noisy.rank() != 4 || noisy.shape()[1] != 4 {
        return Err(Error::Invalid(format!("clip must be [T,4,H,W], got {:?}", noisy.shape())));
    }
    let (t_frames, h, w) = (noisy.shape()[0], noisy.shape()[2], noisy.shape()[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Invalid(format!("packed extents {h}x{w} must be even")));
    }
    let per = 4 * h * w;
    let mut draws_per_frame = Vec::with_capacity(t_frames);
    let mut s1 = Vec::with_capacity(t_frames * per / 4);
    let mut s2 = Vec::with_capacity(t_frames * per / 4);
    for t in 0..t_frames {
        let frame = Tensor::new(
            vec![4, h, w],
            noisy.data()[t * per..(t + 1) * per].to_vec(),
        )?;
        let draws = neighbor_positions(h, w, seed.wrapping_add(t as u64))?;
        let (a, b) = subsample_with(&frame, &draws)?;
        s1.extend_from_slice(a.data());
        s2.extend_from_slice(b.data());
        draws_per_frame.push(draws);
    }
    let s1 = Tensor::new(vec![t_frames, 4, h / 2, w / 2], s1)?;
    let s2 = Tensor::new(vec![t_frames, 4, h / 2, w / 2], s2)?;

    // gradient-free full-frame pass, subsampled with the same draws
    let mut g1 = Vec::with_capacity(s1.len());
    let mut g2 = Vec::with_capacity(s1.len());
    {
        let mut frozen = Session::inference(store);
        let outs = forward_clip(&mut frozen, plan, noisy, fused)?;
        for (t, &o) in outs.iter().enumerate() {
            let (a, b) = subsample_with(frozen.value(o), &draws_per_frame[t])?;
            g1.extend_from_slice(a.data());
            g2.extend_from_slice(b.data());
        }
    }
    let gdiff: Vec<T> = g1.iter().zip(g2.iter()).map(|(&a, &b)| a - b).collect();
    let gdiff = Tensor::new(s1.shape().to_vec(), gdiff)?;

    let outputs = forward_clip(sess, plan, &s1, fused)?;
    let f_s1 = stack_frames(sess, &outputs)?;
    let s2_var = sess.constant(s2);
    let l_rec = sess.g.mean_sq_diff(f_s1, s2_var)?;
    let diff = sess.g.sub(f_s1, s2_var)?;
    let gdiff_var = sess.constant(gdiff);
    let centered = sess.g.sub(diff, gdiff_var)?;
    let zero = sess.constant(Tensor::zeros(sess.g.value(centered).shape().to_vec()));
    let l_reg = sess.g.mean_sq_diff(centered, zero)?;
    let weighted = sess.g.scale(l_reg, T::from_f64(beta2))?;
    let loss = sess.g.add(l_rec, weighted)?;
    Ok(UnsupLoss { loss, l_rec, l_reg })
}

/// Epoch-ramped weight of the regularizer term.
pub fn beta2_schedule(epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return 0.0;
    }
    2.0 * (epoch as f64 / total_epochs as f64)
}
