//! Pooling and resampling over `[C,H,W]` maps.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

impl<T: Scalar> Graph<T> {
    /// 2x2 mean pooling, halving both spatial extents.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 || tx.shape()[1] % 2 != 0 || tx.shape()[2] % 2 != 0 {
            return Err(TensorError::shape("avg_pool2", format!("{:?}", tx.shape())));
        }
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        let q = T::from_f64(0.25);
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let base = (ch * h + 2 * i) * w + 2 * j;
                    out[(ch * oh + i) * ow + j] =
                        (tx.data()[base] + tx.data()[base + 1] + tx.data()[base + w] + tx.data()[base + w + 1]) * q;
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); c * h * w];
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let g = dy.data()[(ch * oh + i) * ow + j] * q;
                        let base = (ch * h + 2 * i) * w + 2 * j;
                        dx[base] += g;
                        dx[base + 1] += g;
                        dx[base + w] += g;
                        dx[base + w + 1] += g;
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![c, h, w], dx).unwrap())]
        }))
    }

    /// Area mean pooling to an arbitrary target size. Each output cell is
    /// the unweighted mean of its source cell; cells partition the input
    /// exactly when the target extents divide the source extents.
    pub fn adaptive_avg_pool(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 {
            return Err(TensorError::shape("adaptive_avg_pool", format!("{:?}", tx.shape())));
        }
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        if out_h == 0 || out_w == 0 {
            return Err(TensorError::invalid("adaptive_avg_pool", "zero output extent"));
        }
        if out_h > h || out_w > w {
            return Err(TensorError::invalid(
                "adaptive_avg_pool",
                format!("target {out_h}x{out_w} exceeds source {h}x{w}"),
            ));
        }
        let mut out = vec![T::zero(); c * out_h * out_w];
        for ch in 0..c {
            for i in 0..out_h {
                let (r0, r1) = cell_range(i, h, out_h);
                for j in 0..out_w {
                    let (c0, c1) = cell_range(j, w, out_w);
                    let mut acc = T::zero();
                    for r in r0..r1 {
                        for cc in c0..c1 {
                            acc += tx.data()[(ch * h + r) * w + cc];
                        }
                    }
                    out[(ch * out_h + i) * out_w + j] = acc / T::from_usize((r1 - r0) * (c1 - c0));
                }
            }
        }
        let value = Tensor::new(vec![c, out_h, out_w], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); c * h * w];
            for ch in 0..c {
                for i in 0..out_h {
                    let (r0, r1) = cell_range(i, h, out_h);
                    for j in 0..out_w {
                        let (c0, c1) = cell_range(j, w, out_w);
                        let g = dy.data()[(ch * out_h + i) * out_w + j]
                            / T::from_usize((r1 - r0) * (c1 - c0));
                        for r in r0..r1 {
                            for cc in c0..c1 {
                                dx[(ch * h + r) * w + cc] += g;
                            }
                        }
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![c, h, w], dx).unwrap())]
        }))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 {
            return Err(TensorError::shape("upsample_nearest2", format!("{:?}", tx.shape())));
        }
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (oh, ow) = (h * 2, w * 2);
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    out[(ch * oh + i) * ow + j] = tx.data()[(ch * h + i / 2) * w + j / 2];
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); c * h * w];
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        dx[(ch * h + i / 2) * w + j / 2] += dy.data()[(ch * oh + i) * ow + j];
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![c, h, w], dx).unwrap())]
        }))
    }
}

/// Source range that output cell `i` of `out` covers in `extent` rows.
fn cell_range(i: usize, extent: usize, out: usize) -> (usize, usize) {
    let lo = i * extent / out;
    let hi = ((i + 1) * extent).div_ceil(out);
    (lo, hi)
}
