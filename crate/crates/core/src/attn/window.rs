//! Shift-window attention masks.
//!
//! After a cyclic shift, a window may contain pixels that wrapped around
//! from the opposite side of the map. The additive mask forbids attention
//! between tokens originating from different pre-shift regions.

use rvid_tensor::{Scalar, Tensor};

const MASK_OFF: f64 = -1e9;

/// Region id per pixel of the rolled map. Rows split at `H-h` and `H-sy`,
/// columns at `W-w` and `W-sx`; nine ids total.
pub fn region_map(map_h: usize, map_w: usize, h: usize, w: usize, sy: usize, sx: usize) -> Vec<u8> {
    let row_region = |i: usize| -> u8 {
        if i < map_h - h {
            0
        } else if i < map_h - sy {
            1
        } else {
            2
        }
    };
    let col_region = |j: usize| -> u8 {
        if j < map_w - w {
            0
        } else if j < map_w - sx {
            1
        } else {
            2
        }
    };
    let mut ids = vec![0u8; map_h * map_w];
    for i in 0..map_h {
        for j in 0..map_w {
            ids[i * map_w + j] = 3 * row_region(i) + col_region(j);
        }
    }
    ids
}

/// Additive attention mask `[nW, N, N]` with entries in {0, -1e9}; `None`
/// when the shift is zero (all-pass).
pub fn attn_mask<T: Scalar>(
    map_h: usize,
    map_w: usize,
    h: usize,
    w: usize,
    sy: usize,
    sx: usize,
) -> Option<Tensor<T>> {
    if sy == 0 && sx == 0 {
        return None;
    }
    let ids = region_map(map_h, map_w, h, w, sy, sx);
    let (gy, gx) = (map_h / h, map_w / w);
    let n = h * w;
    let n_w = gy * gx;
    let mut window_ids = vec![0u8; n_w * n];
    for wy in 0..gy {
        for wx in 0..gx {
            let wi = wy * gx + wx;
            for iy in 0..h {
                for ix in 0..w {
                    window_ids[wi * n + iy * w + ix] = ids[(wy * h + iy) * map_w + wx * w + ix];
                }
            }
        }
    }
    let off = T::from_f64(MASK_OFF);
    let mut mask = vec![T::zero(); n_w * n * n];
    for wi in 0..n_w {
        for a in 0..n {
            for b in 0..n {
                if window_ids[wi * n + a] != window_ids[wi * n + b] {
                    mask[(wi * n + a) * n + b] = off;
                }
            }
        }
    }
    Some(Tensor::new(vec![n_w, n, n], mask).unwrap())
}
