//! Inner loops shared by forward ops and their backward passes.
//!
//! All kernels accumulate into caller-provided output slices in a fixed
//! order, so results are deterministic. Each picks between an axpy-style
//! loop (wide contiguous output rows) and a dot-style loop (wide contiguous
//! reduction) based on the operand shapes; tiny dimensions get transposed
//! into scratch so the hot loop always runs wide.

use crate::scalar::Scalar;

const WIDE: usize = 16;

/// out[m,n] += a[m,k] * b[k,n]
pub fn mm_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if n >= WIDE || n >= k {
        // axpy over contiguous rows of b
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            let a_row = &a[i * k..(i + 1) * k];
            for (p, &a_ip) in a_row.iter().enumerate() {
                if a_ip == T::zero() {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a_ip * bv;
                }
            }
        }
    } else {
        // narrow output: transpose b so each (i,j) is one contiguous dot
        let bt = transpose(b, k, n);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (j, o) in out_row.iter_mut().enumerate() {
                let bt_row = &bt[j * k..(j + 1) * k];
                *o += dot(a_row, bt_row);
            }
        }
    }
}

/// out[m,n] += a[m,k] * b[n,k]^T  (rows of `b` are the columns)
pub fn mm_nt_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    if k >= WIDE {
        // both operand rows are contiguous: plain dots
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (j, o) in out_row.iter_mut().enumerate() {
                *o += dot(a_row, &b[j * k..(j + 1) * k]);
            }
        }
    } else {
        // tiny reduction: transpose b and run wide axpy rows instead
        let bt = transpose(b, n, k);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a_ip) in a_row.iter().enumerate() {
                if a_ip == T::zero() {
                    continue;
                }
                let bt_row = &bt[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(bt_row.iter()) {
                    *o += a_ip * bv;
                }
            }
        }
    }
}

/// out[k,n] += a[m,k]^T * b[m,n]
pub fn mm_tn_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    if n >= WIDE || n >= k {
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let b_row = &b[i * n..(i + 1) * n];
            for (p, &a_ip) in a_row.iter().enumerate() {
                if a_ip == T::zero() {
                    continue;
                }
                let out_row = &mut out[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a_ip * bv;
                }
            }
        }
    } else {
        // accumulate the transposed result with wide rows, then scatter
        let mut tmp = vec![T::zero(); n * k];
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let b_row = &b[i * n..(i + 1) * n];
            for (j, &b_ij) in b_row.iter().enumerate() {
                if b_ij == T::zero() {
                    continue;
                }
                let t_row = &mut tmp[j * k..(j + 1) * k];
                for (o, &av) in t_row.iter_mut().zip(a_row.iter()) {
                    *o += b_ij * av;
                }
            }
        }
        for p in 0..k {
            for j in 0..n {
                out[p * n + j] += tmp[j * k + p];
            }
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

fn transpose<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Cross-correlation with zero padding keeping H x W.
/// x: [c_in, h, w], w: [c_out, c_in, k, k], b: [c_out], out: [c_out, h, w]
pub fn conv2d_fwd<T: Scalar>(
    x: &[T],
    wt: &[T],
    bias: &[T],
    out: &mut [T],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
) {
    let pad = k / 2;
    for o in 0..c_out {
        let out_ch = &mut out[o * h * w..(o + 1) * h * w];
        out_ch.fill(bias[o]);
        for c in 0..c_in {
            let x_ch = &x[c * h * w..(c + 1) * h * w];
            let w_base = ((o * c_in) + c) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wt[w_base + ky * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    // out[i,j] += wv * x[i+ky-pad, j+kx-pad] over valid source rows/cols
                    let (i0, i1) = row_range(h, ky, pad);
                    let (j0, j1) = row_range(w, kx, pad);
                    for i in i0..i1 {
                        let si = (i + ky - pad) * w;
                        let oi = i * w;
                        let src = &x_ch[si + j0 + kx - pad..si + j1 + kx - pad];
                        let dst = &mut out_ch[oi + j0..oi + j1];
                        for (d, &s) in dst.iter_mut().zip(src.iter()) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

/// Valid output index range for a kernel offset under zero padding.
fn row_range(extent: usize, koff: usize, pad: usize) -> (usize, usize) {
    // need 0 <= i + koff - pad < extent
    let lo = pad.saturating_sub(koff);
    let hi = (extent + pad - koff).min(extent);
    (lo, hi.max(lo))
}

/// Gradient w.r.t. conv input. dx: [c_in, h, w]
pub fn conv2d_bwd_input<T: Scalar>(
    dy: &[T],
    wt: &[T],
    dx: &mut [T],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
) {
    let pad = k / 2;
    for o in 0..c_out {
        let dy_ch = &dy[o * h * w..(o + 1) * h * w];
        for c in 0..c_in {
            let dx_ch = &mut dx[c * h * w..(c + 1) * h * w];
            let w_base = ((o * c_in) + c) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wt[w_base + ky * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    // dx[i+ky-pad, j+kx-pad] += wv * dy[i,j]
                    let (i0, i1) = row_range(h, ky, pad);
                    let (j0, j1) = row_range(w, kx, pad);
                    for i in i0..i1 {
                        let si = (i + ky - pad) * w;
                        let oi = i * w;
                        let src = &dy_ch[oi + j0..oi + j1];
                        let dst = &mut dx_ch[si + j0 + kx - pad..si + j1 + kx - pad];
                        for (d, &s) in dst.iter_mut().zip(src.iter()) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients w.r.t. conv weight and bias.
pub fn conv2d_bwd_weight<T: Scalar>(
    x: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
) {
    let pad = k / 2;
    for o in 0..c_out {
        let dy_ch = &dy[o * h * w..(o + 1) * h * w];
        db[o] += dy_ch.iter().copied().sum();
        for c in 0..c_in {
            let x_ch = &x[c * h * w..(c + 1) * h * w];
            let w_base = ((o * c_in) + c) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let (i0, i1) = row_range(h, ky, pad);
                    let (j0, j1) = row_range(w, kx, pad);
                    let mut acc = T::zero();
                    for i in i0..i1 {
                        let si = (i + ky - pad) * w;
                        let oi = i * w;
                        let xs = &x_ch[si + j0 + kx - pad..si + j1 + kx - pad];
                        let gs = &dy_ch[oi + j0..oi + j1];
                        acc += dot(xs, gs);
                    }
                    dw[w_base + ky * k + kx] += acc;
                }
            }
        }
    }
}
