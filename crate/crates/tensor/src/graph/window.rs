//! Window/token rearrangements used by windowed attention.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

impl<T: Scalar> Graph<T> {
    /// Splits `[C,H,W]` into `[nW, N, C]` windows of `h x w` tokens.
    /// Windows and tokens are both in row-major order.
    pub fn window_tokens(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 {
            return Err(TensorError::shape("window_tokens", format!("{:?}", tx.shape())));
        }
        let (c, hh, ww) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        if h == 0 || w == 0 || hh % h != 0 || ww % w != 0 {
            return Err(TensorError::invalid(
                "window_tokens",
                format!("map {hh}x{ww} not divisible by window {h}x{w}"),
            ));
        }
        let (gy, gx) = (hh / h, ww / w);
        let (n_w, n) = (gy * gx, h * w);
        let mut out = vec![T::zero(); n_w * n * c];
        for wy in 0..gy {
            for wx in 0..gx {
                let wi = wy * gx + wx;
                for iy in 0..h {
                    for ix in 0..w {
                        let tok = iy * w + ix;
                        for ch in 0..c {
                            out[(wi * n + tok) * c + ch] =
                                tx.data()[(ch * hh + wy * h + iy) * ww + wx * w + ix];
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![n_w, n, c], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); c * hh * ww];
            for wy in 0..gy {
                for wx in 0..gx {
                    let wi = wy * gx + wx;
                    for iy in 0..h {
                        for ix in 0..w {
                            let tok = iy * w + ix;
                            for ch in 0..c {
                                dx[(ch * hh + wy * h + iy) * ww + wx * w + ix] +=
                                    dy.data()[(wi * n + tok) * c + ch];
                            }
                        }
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![c, hh, ww], dx).unwrap())]
        }))
    }

    /// Inverse of [`Graph::window_tokens`]: merges `[nW,N,C]` back into `[C,H,W]`.
    pub fn window_untokens(&mut self, x: Var, c: usize, hh: usize, ww: usize, h: usize, w: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        let (gy, gx) = (hh / h, ww / w);
        let (n_w, n) = (gy * gx, h * w);
        if tx.shape() != [n_w, n, c] || hh % h != 0 || ww % w != 0 {
            return Err(TensorError::shape(
                "window_untokens",
                format!("{:?} for {c}x{hh}x{ww} windows {h}x{w}", tx.shape()),
            ));
        }
        let mut out = vec![T::zero(); c * hh * ww];
        for wy in 0..gy {
            for wx in 0..gx {
                let wi = wy * gx + wx;
                for iy in 0..h {
                    for ix in 0..w {
                        let tok = iy * w + ix;
                        for ch in 0..c {
                            out[(ch * hh + wy * h + iy) * ww + wx * w + ix] =
                                tx.data()[(wi * n + tok) * c + ch];
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![c, hh, ww], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); n_w * n * c];
            for wy in 0..gy {
                for wx in 0..gx {
                    let wi = wy * gx + wx;
                    for iy in 0..h {
                        for ix in 0..w {
                            let tok = iy * w + ix;
                            for ch in 0..c {
                                dx[(wi * n + tok) * c + ch] +=
                                    dy.data()[(ch * hh + wy * h + iy) * ww + wx * w + ix];
                            }
                        }
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![n_w, n, c], dx).unwrap())]
        }))
    }

    /// 2x2 mean pooling on the token grid of each window:
    /// `[B, h*w, C] -> [B, (h/2)*(w/2), C]`.
    pub fn tokens_pool2(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 || tx.shape()[1] != h * w || h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::shape(
                "tokens_pool2",
                format!("{:?} with window {h}x{w}", tx.shape()),
            ));
        }
        let (b, c) = (tx.shape()[0], tx.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        let on = oh * ow;
        let q = T::from_f64(0.25);
        let mut out = vec![T::zero(); b * on * c];
        for bi in 0..b {
            for i in 0..oh {
                for j in 0..ow {
                    let dst = (bi * on + i * ow + j) * c;
                    for (dy_, dx_) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let src = (bi * h * w + (2 * i + dy_) * w + 2 * j + dx_) * c;
                        for ch in 0..c {
                            out[dst + ch] += tx.data()[src + ch] * q;
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![b, on, c], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); b * h * w * c];
            for bi in 0..b {
                for i in 0..oh {
                    for j in 0..ow {
                        let src = (bi * on + i * ow + j) * c;
                        for (dy_, dx_) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let dst = (bi * h * w + (2 * i + dy_) * w + 2 * j + dx_) * c;
                            for ch in 0..c {
                                dx[dst + ch] += dy.data()[src + ch] * q;
                            }
                        }
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![b, h * w, c], dx).unwrap())]
        }))
    }

    /// Per-window neighbourhood gather-and-pool. For each `h x w` window the
    /// `f*h x f*w` area centred on it is read with zeros outside the map and
    /// mean-pooled by `f x f` down to window size: `[C,H,W] -> [nW, h*w, C]`.
    pub fn neighbor_pool_tokens(&mut self, x: Var, h: usize, w: usize, f: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 {
            return Err(TensorError::shape("neighbor_pool_tokens", format!("{:?}", tx.shape())));
        }
        let (c, hh, ww) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        if f == 0 || f % 2 == 0 {
            return Err(TensorError::invalid("neighbor_pool_tokens", format!("factor {f} must be odd")));
        }
        if hh % h != 0 || ww % w != 0 {
            return Err(TensorError::invalid(
                "neighbor_pool_tokens",
                format!("map {hh}x{ww} not divisible by window {h}x{w}"),
            ));
        }
        let (gy, gx) = (hh / h, ww / w);
        let (n_w, n) = (gy * gx, h * w);
        let inv = T::one() / T::from_usize(f * f);
        let half = ((f - 1) / 2) as i64;
        let mut out = vec![T::zero(); n_w * n * c];
        for wy in 0..gy {
            for wx in 0..gx {
                let wi = wy * gx + wx;
                let top = wy as i64 * h as i64 - half * h as i64;
                let left = wx as i64 * w as i64 - half * w as i64;
                for iy in 0..h {
                    for ix in 0..w {
                        let tok = iy * w + ix;
                        for r in 0..f {
                            let sy = top + (iy * f + r) as i64;
                            if sy < 0 || sy >= hh as i64 {
                                continue;
                            }
                            for s in 0..f {
                                let sx = left + (ix * f + s) as i64;
                                if sx < 0 || sx >= ww as i64 {
                                    continue;
                                }
                                for ch in 0..c {
                                    out[(wi * n + tok) * c + ch] +=
                                        tx.data()[(ch * hh + sy as usize) * ww + sx as usize] * inv;
                                }
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![n_w, n, c], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); c * hh * ww];
            for wy in 0..gy {
                for wx in 0..gx {
                    let wi = wy * gx + wx;
                    let top = wy as i64 * h as i64 - half * h as i64;
                    let left = wx as i64 * w as i64 - half * w as i64;
                    for iy in 0..h {
                        for ix in 0..w {
                            let tok = iy * w + ix;
                            for r in 0..f {
                                let sy = top + (iy * f + r) as i64;
                                if sy < 0 || sy >= hh as i64 {
                                    continue;
                                }
                                for s in 0..f {
                                    let sx = left + (ix * f + s) as i64;
                                    if sx < 0 || sx >= ww as i64 {
                                        continue;
                                    }
                                    for ch in 0..c {
                                        dx[(ch * hh + sy as usize) * ww + sx as usize] +=
                                            dy.data()[(wi * n + tok) * c + ch] * inv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![c, hh, ww], dx).unwrap())]
        }))
    }

    /// Repeats per-frame head batches across windows. Input is laid out
    /// `[T*heads, N, d]` (frame-major) and the output `[T*nW*heads, N, d]`
    /// places copy `w` of frame `t`, head `h` at `(t*nW + w)*heads + h`,
    /// matching the window-token batch layout.
    pub fn broadcast_windows(&mut self, x: Var, n_windows: usize, heads: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.rank() != 3 || tx.shape()[0] % heads != 0 {
            return Err(TensorError::shape(
                "broadcast_windows",
                format!("{:?} with heads {heads}", tx.shape()),
            ));
        }
        let frames = tx.shape()[0] / heads;
        let (n, d) = (tx.shape()[1], tx.shape()[2]);
        let chunk = n * d;
        let mut out = vec![T::zero(); frames * n_windows * heads * chunk];
        for t in 0..frames {
            for wi in 0..n_windows {
                for hd in 0..heads {
                    let src = (t * heads + hd) * chunk;
                    let dst = ((t * n_windows + wi) * heads + hd) * chunk;
                    out[dst..dst + chunk].copy_from_slice(&tx.data()[src..src + chunk]);
                }
            }
        }
        let value = Tensor::new(vec![frames * n_windows * heads, n, d], out)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let mut dx = vec![T::zero(); frames * heads * chunk];
            for t in 0..frames {
                for wi in 0..n_windows {
                    for hd in 0..heads {
                        let dst = (t * heads + hd) * chunk;
                        let src = ((t * n_windows + wi) * heads + hd) * chunk;
                        for i in 0..chunk {
                            dx[dst + i] += dy.data()[src + i];
                        }
                    }
                }
            }
            vec![(x.0, Tensor::new(vec![frames * heads, n, d], dx).unwrap())]
        }))
    }
}
