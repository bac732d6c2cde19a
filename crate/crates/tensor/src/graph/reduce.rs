//! Scalar reductions.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

impl<T: Scalar> Graph<T> {
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        let s: T = tx.data().iter().copied().sum();
        let value = Tensor::scalar(s);
        Ok(self.push_op(value, &[x], move |dy| {
            let g = dy.item();
            vec![(x.0, Tensor::full(tx.shape().to_vec(), g))]
        }))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let s = self.sum_all(x)?;
        self.scale(s, T::one() / T::from_usize(n))
    }

    /// Mean absolute difference (L1 loss).
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let d = self.abs(d)?;
        self.mean_all(d)
    }

    /// Mean squared difference (L2 loss).
    pub fn mean_sq_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let d2 = self.mul(d, d)?;
        self.mean_all(d2)
    }
}
