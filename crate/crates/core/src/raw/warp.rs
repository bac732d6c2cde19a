//! Backward warping of packed frames by a shared flow field.

use rvid_tensor::Tensor;

use crate::error::{Error, Result};

use super::PackedFrame;

/// Dense displacement in packed-pixel units: `[2, H, W]` holding (dx, dy).
/// For an output pixel `(x, y)` the source sample is `(x + dx, y + dy)`.
#[derive(Clone, Debug)]
pub struct FlowField {
    pub displacement: Tensor<f32>,
}

impl FlowField {
    pub fn new(displacement: Tensor<f32>) -> Result<Self> {
        if displacement.rank() != 3 || displacement.shape()[0] != 2 {
            return Err(Error::Invalid(format!("flow must be [2,H,W], got {:?}", displacement.shape())));
        }
        if !displacement.all_finite() {
            return Err(Error::Invalid("flow contains non-finite values".into()));
        }
        let (h, w) = (displacement.shape()[1] as f32, displacement.shape()[2] as f32);
        if displacement.data().iter().any(|&v| v.abs() > h.max(w)) {
            return Err(Error::Invalid("flow magnitude exceeds frame extents".into()));
        }
        Ok(FlowField { displacement })
    }

    pub fn zero(h: usize, w: usize) -> Self {
        FlowField { displacement: Tensor::zeros(vec![2, h, w]) }
    }

    /// Constant-translation field.
    pub fn constant(h: usize, w: usize, dx: f32, dy: f32) -> Result<Self> {
        let data: Vec<f32> = (0..2 * h * w).map(|i| if i < h * w { dx } else { dy }).collect();
        Self::new(Tensor::new(vec![2, h, w], data)?)
    }

    pub fn height(&self) -> usize {
        self.displacement.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.displacement.shape()[2]
    }
}

/// Bilinear backward warp applied identically to all four channels, so the
/// Bayer phase is preserved. Out-of-bounds samples clamp to the edge.
pub fn warp_packed(p: &PackedFrame, flow: &FlowField) -> Result<PackedFrame> {
    let (h, w) = (p.height(), p.width());
    if flow.height() != h || flow.width() != w {
        return Err(Error::Invalid(format!(
            "flow extents {}x{} do not match packed extents {h}x{w}",
            flow.height(),
            flow.width()
        )));
    }
    let fd = flow.displacement.data();
    let hw = h * w;
    let mut out = vec![0.0f32; 4 * hw];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let sx = x as f32 + fd[idx];
            let sy = y as f32 + fd[hw + idx];
            // clamp the sample point into the frame, then bilinear
            let sx = sx.clamp(0.0, (w - 1) as f32);
            let sy = sy.clamp(0.0, (h - 1) as f32);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f32;
            let fy = sy - y0 as f32;
            for c in 0..4 {
                let ch = &p.channels.data()[c * hw..(c + 1) * hw];
                let v00 = ch[y0 * w + x0];
                let v01 = ch[y0 * w + x1];
                let v10 = ch[y1 * w + x0];
                let v11 = ch[y1 * w + x1];
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                out[c * hw + idx] = top + (bot - top) * fy;
            }
        }
    }
    PackedFrame::new(Tensor::new(vec![4, h, w], out)?, p.black_level, p.white_level)
}
