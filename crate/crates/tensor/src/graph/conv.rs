//! 2D convolution (cross-correlation) with same-size zero padding.

use crate::error::{Result, TensorError};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

impl<T: Scalar> Graph<T> {
    /// `x: [C_in,H,W]`, `w: [C_out,C_in,k,k]`, `b: [C_out]`, odd `k`,
    /// zero padding `(k-1)/2` so the output stays `[C_out,H,W]`.
    /// Cross-correlation convention: no kernel flip.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x).clone(), self.value(w).clone(), self.value(b).clone());
        if tx.rank() != 3 || tw.rank() != 4 {
            return Err(TensorError::shape("conv2d", format!("x {:?}, w {:?}", tx.shape(), tw.shape())));
        }
        let (c_in, h, wd) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (c_out, wc_in, k, k2) = (tw.shape()[0], tw.shape()[1], tw.shape()[2], tw.shape()[3]);
        if wc_in != c_in || k != k2 {
            return Err(TensorError::shape("conv2d", format!("x {:?}, w {:?}", tx.shape(), tw.shape())));
        }
        if k % 2 == 0 {
            return Err(TensorError::invalid("conv2d", format!("unsupported even kernel size {k}")));
        }
        if tb.shape() != [c_out] {
            return Err(TensorError::shape("conv2d bias", format!("{:?} for C_out={c_out}", tb.shape())));
        }
        let mut out = vec![T::zero(); c_out * h * wd];
        kernels::conv2d_fwd(tx.data(), tw.data(), tb.data(), &mut out, c_in, c_out, h, wd, k);
        let value = Tensor::new(vec![c_out, h, wd], out)?;
        Ok(self.push_op(value, &[x, w, b], move |dy| {
            let mut dx = vec![T::zero(); c_in * h * wd];
            kernels::conv2d_bwd_input(dy.data(), tw.data(), &mut dx, c_in, c_out, h, wd, k);
            let mut dw = vec![T::zero(); c_out * c_in * k * k];
            let mut db = vec![T::zero(); c_out];
            kernels::conv2d_bwd_weight(tx.data(), dy.data(), &mut dw, &mut db, c_in, c_out, h, wd, k);
            vec![
                (x.0, Tensor::new(vec![c_in, h, wd], dx).unwrap()),
                (w.0, Tensor::new(vec![c_out, c_in, k, k], dw).unwrap()),
                (b.0, Tensor::new(vec![c_out], db).unwrap()),
            ]
        }))
    }
}
