//! Matrix products and linear projections.

use crate::error::{Result, TensorError};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

impl<T: Scalar> Graph<T> {
    /// Standard matrix product `[M,K] x [K,N] -> [M,N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(TensorError::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::mm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push_op(value, &[a, b], move |dy| {
            let mut da = vec![T::zero(); m * k];
            kernels::mm_nt_acc(dy.data(), tb.data(), &mut da, m, n, k);
            let mut db = vec![T::zero(); k * n];
            kernels::mm_tn_acc(ta.data(), dy.data(), &mut db, m, k, n);
            vec![
                (a.0, Tensor::new(vec![m, k], da).unwrap()),
                (b.0, Tensor::new(vec![k, n], db).unwrap()),
            ]
        }))
    }

    /// Batched matrix product `[B,M,K] x [B,K,N] -> [B,M,N]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if ta.rank() != 3 || tb.rank() != 3 || ta.shape()[0] != tb.shape()[0] || ta.shape()[2] != tb.shape()[1] {
            return Err(TensorError::shape("bmm", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let (bt, m, k, n) = (ta.shape()[0], ta.shape()[1], ta.shape()[2], tb.shape()[2]);
        let mut out = vec![T::zero(); bt * m * n];
        for i in 0..bt {
            kernels::mm_acc(
                &ta.data()[i * m * k..(i + 1) * m * k],
                &tb.data()[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let value = Tensor::new(vec![bt, m, n], out)?;
        Ok(self.push_op(value, &[a, b], move |dy| {
            let mut da = vec![T::zero(); bt * m * k];
            let mut db = vec![T::zero(); bt * k * n];
            for i in 0..bt {
                let dyb = &dy.data()[i * m * n..(i + 1) * m * n];
                kernels::mm_nt_acc(dyb, &tb.data()[i * k * n..(i + 1) * k * n], &mut da[i * m * k..(i + 1) * m * k], m, n, k);
                kernels::mm_tn_acc(&ta.data()[i * m * k..(i + 1) * m * k], dyb, &mut db[i * k * n..(i + 1) * k * n], m, k, n);
            }
            vec![
                (a.0, Tensor::new(vec![bt, m, k], da).unwrap()),
                (b.0, Tensor::new(vec![bt, k, n], db).unwrap()),
            ]
        }))
    }

    /// Batched product against transposed right operand:
    /// `[B,M,K] x [B,N,K]^T -> [B,M,N]`. This is the `Q K^T` shape.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if ta.rank() != 3 || tb.rank() != 3 || ta.shape()[0] != tb.shape()[0] || ta.shape()[2] != tb.shape()[2] {
            return Err(TensorError::shape("bmm_nt", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let (bt, m, k, n) = (ta.shape()[0], ta.shape()[1], ta.shape()[2], tb.shape()[1]);
        let mut out = vec![T::zero(); bt * m * n];
        for i in 0..bt {
            kernels::mm_nt_acc(
                &ta.data()[i * m * k..(i + 1) * m * k],
                &tb.data()[i * n * k..(i + 1) * n * k],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let value = Tensor::new(vec![bt, m, n], out)?;
        Ok(self.push_op(value, &[a, b], move |dy| {
            let mut da = vec![T::zero(); bt * m * k];
            let mut db = vec![T::zero(); bt * n * k];
            for i in 0..bt {
                let dyb = &dy.data()[i * m * n..(i + 1) * m * n];
                // da = dy * b ; db = dy^T * a
                kernels::mm_acc(dyb, &tb.data()[i * n * k..(i + 1) * n * k], &mut da[i * m * k..(i + 1) * m * k], m, n, k);
                kernels::mm_tn_acc(dyb, &ta.data()[i * m * k..(i + 1) * m * k], &mut db[i * n * k..(i + 1) * n * k], m, n, k);
            }
            vec![
                (a.0, Tensor::new(vec![bt, m, k], da).unwrap()),
                (b.0, Tensor::new(vec![bt, n, k], db).unwrap()),
            ]
        }))
    }

    /// Projects the trailing axis: `[.., C] x [C, D] -> [.., D]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x).clone(), self.value(w).clone());
        if tw.rank() != 2 || tx.rank() == 0 {
            return Err(TensorError::shape("linear", format!("{:?} x {:?}", tx.shape(), tw.shape())));
        }
        let c = *tx.shape().last().unwrap();
        if c != tw.shape()[0] {
            return Err(TensorError::shape("linear", format!("{:?} x {:?}", tx.shape(), tw.shape())));
        }
        let d = tw.shape()[1];
        let l = tx.len() / c;
        let mut out = vec![T::zero(); l * d];
        kernels::mm_acc(tx.data(), tw.data(), &mut out, l, c, d);
        let mut out_shape = tx.shape().to_vec();
        *out_shape.last_mut().unwrap() = d;
        let value = Tensor::new(out_shape, out)?;
        let in_shape = tx.shape().to_vec();
        Ok(self.push_op(value, &[x, w], move |dy| {
            let mut dx = vec![T::zero(); l * c];
            kernels::mm_nt_acc(dy.data(), tw.data(), &mut dx, l, d, c);
            let mut dw = vec![T::zero(); c * d];
            kernels::mm_tn_acc(tx.data(), dy.data(), &mut dw, l, c, d);
            vec![
                (x.0, Tensor::new(in_shape.clone(), dx).unwrap()),
                (w.0, Tensor::new(vec![c, d], dw).unwrap()),
            ]
        }))
    }
}
