//! Shape manipulation: reshape, permute, concat, slice, rolls, padding.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

impl<T: Scalar> Graph<T> {
    /// Metadata-only reshape; the buffer is shared.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let tx = self.value(x).clone();
        let value = tx.reshaped(shape)?;
        let in_shape = tx.shape().to_vec();
        Ok(self.push_op(value, &[x], move |dy| {
            vec![(x.0, dy.reshaped(in_shape.clone()).unwrap())]
        }))
    }

    /// Materialized axis permutation.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let tx = self.value(x).clone();
        let value = permute_tensor(&tx, perm)?;
        let perm_owned = perm.to_vec();
        Ok(self.push_op(value, &[x], move |dy| {
            let mut inv = vec![0usize; perm_owned.len()];
            for (i, &p) in perm_owned.iter().enumerate() {
                inv[p] = i;
            }
            vec![(x.0, permute_tensor(dy, &inv).unwrap())]
        }))
    }

    /// Concatenation along `axis`.
    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::invalid("concat", "no inputs"));
        }
        let tensors: Vec<Tensor<T>> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let rank = tensors[0].rank();
        if axis >= rank {
            return Err(TensorError::invalid("concat", format!("axis {axis} of rank {rank}")));
        }
        for t in &tensors[1..] {
            if t.rank() != rank {
                return Err(TensorError::shape("concat", "rank mismatch".to_string()));
            }
            for a in 0..rank {
                if a != axis && t.shape()[a] != tensors[0].shape()[a] {
                    return Err(TensorError::shape(
                        "concat",
                        format!("{:?} vs {:?} on axis {a}", t.shape(), tensors[0].shape()),
                    ));
                }
            }
        }
        let outer: usize = tensors[0].shape()[..axis].iter().product();
        let inner: usize = tensors[0].shape()[axis + 1..].iter().product();
        let extents: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let mut out_shape = tensors[0].shape().to_vec();
        out_shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (t, &e) in tensors.iter().zip(extents.iter()) {
                let start = o * e * inner;
                out.extend_from_slice(&t.data()[start..start + e * inner]);
            }
        }
        let value = Tensor::new(out_shape, out)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let part_shapes: Vec<Vec<usize>> = tensors.iter().map(|t| t.shape().to_vec()).collect();
        Ok(self.push_op(value, parts, move |dy| {
            let mut grads = Vec::with_capacity(ids.len());
            let mut offset = 0usize;
            for (pi, &e) in extents.iter().enumerate() {
                let mut gd = Vec::with_capacity(outer * e * inner);
                for o in 0..outer {
                    let start = o * total * inner + offset * inner;
                    gd.extend_from_slice(&dy.data()[start..start + e * inner]);
                }
                grads.push((ids[pi], Tensor::new(part_shapes[pi].clone(), gd).unwrap()));
                offset += e;
            }
            grads
        }))
    }

    /// Contiguous slice `start..start+len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if axis >= tx.rank() || start + len > tx.shape()[axis] {
            return Err(TensorError::invalid(
                "slice",
                format!("{start}..{} along axis {axis} of {:?}", start + len, tx.shape()),
            ));
        }
        let outer: usize = tx.shape()[..axis].iter().product();
        let extent = tx.shape()[axis];
        let inner: usize = tx.shape()[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&tx.data()[base..base + len * inner]);
        }
        let mut out_shape = tx.shape().to_vec();
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, out)?;
        let in_shape = tx.shape().to_vec();
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); outer * extent * inner];
            for o in 0..outer {
                let src = o * len * inner;
                let dst = (o * extent + start) * inner;
                dx[dst..dst + len * inner].copy_from_slice(&dy.data()[src..src + len * inner]);
            }
            vec![(x.0, Tensor::new(in_shape.clone(), dx).unwrap())]
        }))
    }

    /// Cyclic roll of a `[C,H,W]` map: `out[c,i,j] = x[c, (i+sy) mod H, (j+sx) mod W]`.
    /// Inverse is the same op with negated shifts.
    pub fn cyclic_shift(&mut self, x: Var, sy: i64, sx: i64) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 {
            return Err(TensorError::shape("cyclic_shift", format!("{:?}", tx.shape())));
        }
        let value = roll_chw(&tx, sy, sx);
        Ok(self.push_op(value, &[x], move |dy| {
            vec![(x.0, roll_chw(dy, -sy, -sx))]
        }))
    }

    /// Zero padding of a `[C,H,W]` map on all four sides.
    pub fn pad2d(&mut self, x: Var, top: usize, bottom: usize, left: usize, right: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 {
            return Err(TensorError::shape("pad2d", format!("{:?}", tx.shape())));
        }
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (oh, ow) = (h + top + bottom, w + left + right);
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for i in 0..h {
                let src = (ch * h + i) * w;
                let dst = (ch * oh + i + top) * ow + left;
                out[dst..dst + w].copy_from_slice(&tx.data()[src..src + w]);
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); c * h * w];
            for ch in 0..c {
                for i in 0..h {
                    let dst = (ch * h + i) * w;
                    let src = (ch * oh + i + top) * ow + left;
                    dx[dst..dst + w].copy_from_slice(&dy.data()[src..src + w]);
                }
            }
            vec![(x.0, Tensor::new(vec![c, h, w], dx).unwrap())]
        }))
    }

    /// Crop of a `[C,H,W]` map to `[C, h, w]` starting at `(top, left)`.
    pub fn crop2d(&mut self, x: Var, top: usize, left: usize, h: usize, w: usize) -> Result<Var> {
        let y = self.slice(x, 1, top, h)?;
        self.slice(y, 2, left, w)
    }

    /// Stacks equal-shaped tensors along a fresh leading axis.
    pub fn stack0(&mut self, parts: &[Var]) -> Result<Var> {
        let reshaped: Vec<Var> = parts
            .iter()
            .map(|&p| {
                let mut s = self.value(p).shape().to_vec();
                s.insert(0, 1);
                self.reshape(p, s)
            })
            .collect::<Result<_>>()?;
        self.concat(0, &reshaped)
    }
}

fn roll_chw<T: Scalar>(t: &Tensor<T>, sy: i64, sx: i64) -> Tensor<T> {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let modsy = sy.rem_euclid(h as i64) as usize;
    let modsx = sx.rem_euclid(w as i64) as usize;
    let mut out = vec![T::zero(); t.len()];
    for ch in 0..c {
        for i in 0..h {
            let si = (i + modsy) % h;
            let dst = (ch * h + i) * w;
            let src = (ch * h + si) * w;
            // split row copy at the wrap point
            let first = w - modsx;
            out[dst..dst + first].copy_from_slice(&t.data()[src + modsx..src + w]);
            out[dst + first..dst + w].copy_from_slice(&t.data()[src..src + modsx]);
        }
    }
    Tensor::new(vec![c, h, w], out).unwrap()
}

fn permute_tensor<T: Scalar>(t: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>> {
    let rank = t.rank();
    if perm.len() != rank {
        return Err(TensorError::invalid("permute", format!("perm {:?} for rank {rank}", perm)));
    }
    let mut seen = vec![false; rank];
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(TensorError::invalid("permute", format!("bad perm {:?}", perm)));
        }
        seen[p] = true;
    }
    let in_shape = t.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let mut in_strides = vec![1usize; rank];
    for a in (0..rank.saturating_sub(1)).rev() {
        in_strides[a] = in_strides[a + 1] * in_shape[a + 1];
    }
    let mapped_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = vec![T::zero(); t.len()];
    let mut idx = vec![0usize; rank];
    for o in out.iter_mut() {
        let mut src = 0usize;
        for a in 0..rank {
            src += idx[a] * mapped_strides[a];
        }
        *o = t.data()[src];
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < out_shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Tensor::new(out_shape, out)
}
