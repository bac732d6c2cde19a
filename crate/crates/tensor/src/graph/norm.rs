//! Row softmax and layer normalization.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

impl<T: Scalar> Graph<T> {
    /// Row softmax over the last axis of a `[M,N]` tensor.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_masked(x, None, 1)
    }

    /// Softmax over the last axis of `[.., M, N]` with an optional additive
    /// mask of shape `[G, M, N]`. For a flattened batch of size B the mask
    /// slab used by batch element `b` is `(b / group) % G`, which lets one
    /// window-mask set serve every frame and head.
    pub fn softmax_masked(&mut self, x: Var, mask: Option<&Tensor<T>>, group: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() < 2 {
            return Err(TensorError::shape("softmax", format!("{:?}", tx.shape())));
        }
        let n = *tx.shape().last().unwrap();
        let m = tx.shape()[tx.rank() - 2];
        let rows = tx.len() / n;
        let batches = rows / m;
        let g = match &mask {
            Some(mt) => {
                if mt.rank() != 3 || mt.shape()[1] != m || mt.shape()[2] != n {
                    return Err(TensorError::shape(
                        "softmax mask",
                        format!("mask {:?} vs rows {m}x{n}", mt.shape()),
                    ));
                }
                mt.shape()[0]
            }
            None => 1,
        };
        if group == 0 || (mask.is_some() && batches % group != 0) {
            return Err(TensorError::invalid("softmax", format!("bad mask group {group} for batch {batches}")));
        }
        let mask = mask.cloned();
        let mut out = vec![T::zero(); tx.len()];
        for b in 0..batches {
            let slab = mask.as_ref().map(|mt| {
                let idx = (b / group) % g;
                &mt.data()[idx * m * n..(idx + 1) * m * n]
            });
            for r in 0..m {
                let base = (b * m + r) * n;
                let row = &tx.data()[base..base + n];
                let orow = &mut out[base..base + n];
                let mut mx = T::neg_infinity();
                for j in 0..n {
                    let v = row[j] + slab.map_or(T::zero(), |s| s[r * n + j]);
                    orow[j] = v;
                    if v > mx {
                        mx = v;
                    }
                }
                let mut sum = T::zero();
                for v in orow.iter_mut() {
                    *v = (*v - mx).exp();
                    sum += *v;
                }
                for v in orow.iter_mut() {
                    *v /= sum;
                }
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        let y = value.clone();
        Ok(self.push_op(value, &[x], move |dy| {
            // dx = y * (dy - sum_j dy_j y_j) per row
            let mut dx = vec![T::zero(); y.len()];
            let n = *y.shape().last().unwrap();
            for r in 0..y.len() / n {
                let base = r * n;
                let yr = &y.data()[base..base + n];
                let gr = &dy.data()[base..base + n];
                let dot: T = yr.iter().zip(gr.iter()).map(|(&a, &b)| a * b).sum();
                for j in 0..n {
                    dx[base + j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![(x.0, Tensor::new(y.shape().to_vec(), dx).unwrap())]
        }))
    }

    /// Layer norm across the channel axis of `[C,H,W]` with learned affine.
    pub fn layer_norm_chan(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x).clone(), self.value(gamma).clone(), self.value(beta).clone());
        if tx.rank() != 3 {
            return Err(TensorError::shape("layer_norm", format!("{:?}", tx.shape())));
        }
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        if tg.shape() != [c] || tb.shape() != [c] {
            return Err(TensorError::shape(
                "layer_norm affine",
                format!("gamma {:?}, beta {:?}, C={c}", tg.shape(), tb.shape()),
            ));
        }
        let eps = T::from_f64(1e-5);
        let hw = h * w;
        let cf = T::from_usize(c);
        let mut out = vec![T::zero(); tx.len()];
        let mut xhat = vec![T::zero(); tx.len()];
        let mut inv_std = vec![T::zero(); hw];
        for p in 0..hw {
            let mut mean = T::zero();
            for ch in 0..c {
                mean += tx.data()[ch * hw + p];
            }
            mean /= cf;
            let mut var = T::zero();
            for ch in 0..c {
                let d = tx.data()[ch * hw + p] - mean;
                var += d * d;
            }
            var /= cf;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[p] = istd;
            for ch in 0..c {
                let xh = (tx.data()[ch * hw + p] - mean) * istd;
                xhat[ch * hw + p] = xh;
                out[ch * hw + p] = xh * tg.data()[ch] + tb.data()[ch];
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push_op(value, &[x, gamma, beta], move |dy| {
            let mut dx = vec![T::zero(); dy.len()];
            let mut dg = vec![T::zero(); c];
            let mut db = vec![T::zero(); c];
            for p in 0..hw {
                let mut m1 = T::zero();
                let mut m2 = T::zero();
                for ch in 0..c {
                    let g = dy.data()[ch * hw + p] * tg.data()[ch];
                    m1 += g;
                    m2 += g * xhat[ch * hw + p];
                }
                m1 /= cf;
                m2 /= cf;
                for ch in 0..c {
                    let g = dy.data()[ch * hw + p] * tg.data()[ch];
                    dx[ch * hw + p] = (g - m1 - xhat[ch * hw + p] * m2) * inv_std[p];
                    dg[ch] += dy.data()[ch * hw + p] * xhat[ch * hw + p];
                    db[ch] += dy.data()[ch * hw + p];
                }
            }
            vec![
                (x.0, Tensor::new(vec![c, h, w], dx).unwrap()),
                (gamma.0, Tensor::new(vec![c], dg).unwrap()),
                (beta.0, Tensor::new(vec![c], db).unwrap()),
            ]
        }))
    }
}
