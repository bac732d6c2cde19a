//! PSNR and SSIM quality metrics.

use rvid_tensor::Tensor;

/// `10 log10(peak^2 / MSE)`; `f64::INFINITY` when the inputs are identical.
pub fn psnr(a: &Tensor<f32>, b: &Tensor<f32>, peak: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "psnr shape mismatch");
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| {
            let d = (x - y) as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (peak * peak / mse).log10()
}

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Mean structural similarity with the standard 11x11 Gaussian window
/// (sigma 1.5), averaged over channels. Inputs are `[C,H,W]` or `[H,W]`.
/// Maps smaller than the window fall back to global statistics.
pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>, peak: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "ssim shape mismatch");
    let (c, h, w) = match a.rank() {
        2 => (1, a.shape()[0], a.shape()[1]),
        3 => (a.shape()[0], a.shape()[1], a.shape()[2]),
        r => panic!("ssim expects rank 2 or 3, got {r}"),
    };
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);
    let mut acc = 0.0;
    for ch in 0..c {
        let xa = &a.data()[ch * h * w..(ch + 1) * h * w];
        let xb = &b.data()[ch * h * w..(ch + 1) * h * w];
        acc += if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
            ssim_channel(xa, xb, h, w, c1, c2)
        } else {
            ssim_global(xa, xb, c1, c2)
        };
    }
    acc / c as f64
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable Gaussian filter, valid region only.
fn gauss_filter(x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let k = gaussian_kernel();
    let r = SSIM_WINDOW;
    let wo = w - r + 1;
    let ho = h - r + 1;
    let mut rows = vec![0.0; h * wo];
    for i in 0..h {
        for j in 0..wo {
            let mut s = 0.0;
            for (t, &kt) in k.iter().enumerate() {
                s += kt * x[i * w + j + t];
            }
            rows[i * wo + j] = s;
        }
    }
    let mut out = vec![0.0; ho * wo];
    for i in 0..ho {
        for j in 0..wo {
            let mut s = 0.0;
            for (t, &kt) in k.iter().enumerate() {
                s += kt * rows[(i + t) * wo + j];
            }
            out[i * wo + j] = s;
        }
    }
    (out, ho, wo)
}

fn ssim_channel(a: &[f32], b: &[f32], h: usize, w: usize, c1: f64, c2: f64) -> f64 {
    let xa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let xb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let aa: Vec<f64> = xa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = xb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = xa.iter().zip(xb.iter()).map(|(x, y)| x * y).collect();
    let (mu_a, ho, wo) = gauss_filter(&xa, h, w);
    let (mu_b, _, _) = gauss_filter(&xb, h, w);
    let (m_aa, _, _) = gauss_filter(&aa, h, w);
    let (m_bb, _, _) = gauss_filter(&bb, h, w);
    let (m_ab, _, _) = gauss_filter(&ab, h, w);
    let mut acc = 0.0;
    for i in 0..ho * wo {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    acc / (ho * wo) as f64
}

fn ssim_global(a: &[f32], b: &[f32], c1: f64, c2: f64) -> f64 {
    let n = a.len() as f64;
    let ma: f64 = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb: f64 = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut cov = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        va += (x as f64 - ma) * (x as f64 - ma);
        vb += (y as f64 - mb) * (y as f64 - mb);
        cov += (x as f64 - ma) * (y as f64 - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_hit_the_sentinels() {
        let a = Tensor::from_fn(vec![1, 16, 16], |i| (i as f32 * 0.37).sin() * 0.5 + 0.5);
        assert!(psnr(&a, &a, 1.0).is_infinite());
        assert!((ssim(&a, &a, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_closed_form() {
        // uniform squared error of 0.01 at peak 1 => 20 dB
        let a = Tensor::zeros(vec![8, 8]);
        let b = Tensor::full(vec![8, 8], 0.1);
        assert!((psnr(&a, &b, 1.0) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = Tensor::from_fn(vec![16, 16], |i| ((i * 7 % 13) as f32) / 13.0);
        let b = Tensor::from_fn(vec![16, 16], |i| ((i * 5 % 11) as f32) / 11.0);
        let d = (ssim(&a, &b, 1.0) - ssim(&b, &a, 1.0)).abs();
        assert!(d < 1e-9);
    }
}
