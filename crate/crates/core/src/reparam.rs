//! Structural reparameterization: collapses the training-time parallel
//! linear pair into one linear, and the trailing 1x1 / 3x3 convolution
//! chain into one 3x3 convolution. Both transforms are exact in real
//! arithmetic; floating point agreement is verified at the tolerances the
//! tests pin down.

use rvid_tensor::{Scalar, Tensor};

use crate::attn::{BlockKind, BlockSettings};
use crate::error::{Error, Result};
use crate::model::plan::ModelPlan;
use crate::model::plan::Stage;
use crate::params::ParamStore;

/// `W_f = W_1 + W_2`, `b_f = b_1 + b_2` for two parallel linear branches
/// sharing input and output shapes.
pub fn fuse_parallel_linear<T: Scalar>(
    w1: &Tensor<T>,
    b1: &Tensor<T>,
    w2: &Tensor<T>,
    b2: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if w1.shape() != w2.shape() || b1.shape() != b2.shape() {
        return Err(Error::Invalid(format!(
            "parallel branches disagree: {:?}/{:?} vs {:?}/{:?}",
            w1.shape(),
            b1.shape(),
            w2.shape(),
            b2.shape()
        )));
    }
    let wf = Tensor::new(
        w1.shape().to_vec(),
        w1.data().iter().zip(w2.data().iter()).map(|(&a, &b)| a + b).collect(),
    )?;
    let bf = Tensor::new(
        b1.shape().to_vec(),
        b1.data().iter().zip(b2.data().iter()).map(|(&a, &b)| a + b).collect(),
    )?;
    Ok((wf, bf))
}

/// Folds a pointwise linear stage (`lin_w: [C_in, C_mid]`, applied as
/// `x . W`) into the following 3x3 convolution
/// (`conv_w: [C_out, C_mid, 3, 3]`):
///
/// `W_f[o,i,:,:] = sum_m conv_w[o,m,:,:] * lin_w[i,m]`
/// `b_f[o] = sum_m sum_kl conv_w[o,m,k,l] * lin_b[m] + conv_b[o]`
///
/// Valid only because no nonlinearity sits between the stages and the 1x1
/// stage needs no padding.
pub fn fuse_linear_into_conv<T: Scalar>(
    lin_w: &Tensor<T>,
    lin_b: &Tensor<T>,
    conv_w: &Tensor<T>,
    conv_b: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if lin_w.rank() != 2 || conv_w.rank() != 4 {
        return Err(Error::Invalid(format!(
            "expected linear [C_in,C_mid] and conv [C_out,C_mid,k,k], got {:?} and {:?}",
            lin_w.shape(),
            conv_w.shape()
        )));
    }
    let (c_in, c_mid) = (lin_w.shape()[0], lin_w.shape()[1]);
    let (c_out, wc_mid, k, k2) = (conv_w.shape()[0], conv_w.shape()[1], conv_w.shape()[2], conv_w.shape()[3]);
    if wc_mid != c_mid || k != k2 || lin_b.shape() != [c_mid] || conv_b.shape() != [c_out] {
        return Err(Error::Invalid(format!(
            "channel chain mismatch: lin {:?}/{:?}, conv {:?}/{:?}",
            lin_w.shape(),
            lin_b.shape(),
            conv_w.shape(),
            conv_b.shape()
        )));
    }
    let kk = k * k;
    let mut wf = vec![T::zero(); c_out * c_in * kk];
    for o in 0..c_out {
        for i in 0..c_in {
            for t in 0..kk {
                let mut acc = T::zero();
                for m in 0..c_mid {
                    acc += conv_w.data()[(o * c_mid + m) * kk + t] * lin_w.data()[i * c_mid + m];
                }
                wf[(o * c_in + i) * kk + t] = acc;
            }
        }
    }
    let mut bf = vec![T::zero(); c_out];
    for o in 0..c_out {
        let mut acc = conv_b.data()[o];
        for m in 0..c_mid {
            let wsum: T = conv_w.data()[(o * c_mid + m) * kk..(o * c_mid + m + 1) * kk]
                .iter()
                .copied()
                .sum();
            acc += wsum * lin_b.data()[m];
        }
        bf[o] = acc;
    }
    Ok((Tensor::new(vec![c_out, c_in, k, k], wf)?, Tensor::new(vec![c_out], bf)?))
}

/// Collapses every fusion site of a trained store into the inference
/// topology. The input store is left untouched; fusing an already-fused
/// store is refused.
pub fn fuse_store(plan: &ModelPlan, store: &ParamStore<f32>) -> Result<ParamStore<f32>> {
    let mut out = ParamStore::new();
    let mut fused_sites: Vec<String> = Vec::new();
    for stage in &plan.stages {
        if let Stage::Block(b) = stage {
            fuse_block(b, store, &mut out, &mut fused_sites)?;
        }
    }
    // carry over everything that is not part of a fusion site
    let consumed: std::collections::BTreeSet<String> = fused_sites.into_iter().collect();
    for (name, p) in store.iter() {
        if consumed.contains(name) {
            continue;
        }
        out.insert(name, p.value.clone())?;
    }
    Ok(out)
}

fn fuse_block(
    b: &BlockSettings,
    store: &ParamStore<f32>,
    out: &mut ParamStore<f32>,
    consumed: &mut Vec<String>,
) -> Result<()> {
    let _ = BlockKind::Mssb; // kinds share the fusion sites
    for u in 0..b.n_units {
        let mlp = format!("{}.u{u}.mlp", b.prefix);
        if store.contains(&format!("{mlp}.w1")) {
            return Err(Error::AlreadyFused(format!("{mlp}.w1 present")));
        }
        let w1a = &store.get(&format!("{mlp}.w1a"))?.value;
        let b1a = &store.get(&format!("{mlp}.b1a"))?.value;
        let w1b = &store.get(&format!("{mlp}.w1b"))?.value;
        let b1b = &store.get(&format!("{mlp}.b1b"))?.value;
        let (wf, bf) = fuse_parallel_linear(w1a, b1a, w1b, b1b)?;
        out.insert(format!("{mlp}.w1"), wf)?;
        out.insert(format!("{mlp}.b1"), bf)?;
        for n in ["w1a", "b1a", "w1b", "b1b"] {
            consumed.push(format!("{mlp}.{n}"));
        }
    }
    let tail = format!("{}.tail", b.prefix);
    if store.contains(&format!("{tail}.fused.w")) {
        return Err(Error::AlreadyFused(format!("{tail}.fused.w present")));
    }
    let lw = &store.get(&format!("{tail}.lin.w"))?.value;
    let lb = &store.get(&format!("{tail}.lin.b"))?.value;
    let cw = &store.get(&format!("{tail}.conv.w"))?.value;
    let cb = &store.get(&format!("{tail}.conv.b"))?.value;
    let (wf, bf) = fuse_linear_into_conv(lw, lb, cw, cb)?;
    out.insert(format!("{tail}.fused.w"), wf)?;
    out.insert(format!("{tail}.fused.b"), bf)?;
    for n in ["lin.w", "lin.b", "conv.w", "conv.b"] {
        consumed.push(format!("{tail}.{n}"));
    }
    Ok(())
}
