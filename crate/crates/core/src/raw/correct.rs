//! Intensity and color correction between recaptured noisy/clean pairs.

use crate::error::{Error, Result};

use super::{PackedFrame, RawFrame};

/// Brightness compensation result. `overexposure_risk` is raised when the
/// gain is below 1: applying it pulls clipped highlights of the clean frame
/// under the white level, which the capture protocol avoids.
#[derive(Clone, Copy, Debug)]
pub struct IntensityGain {
    pub gain: f64,
    pub overexposure_risk: bool,
}

/// Gain making the clean frame match the noisy frame's brightness:
/// the ratio of black-level-subtracted pixel sums.
pub fn intensity_gain(noisy: &RawFrame, clean: &RawFrame) -> Result<IntensityGain> {
    if noisy.mosaic.shape() != clean.mosaic.shape() {
        return Err(Error::Invalid(format!(
            "frame extents differ: {:?} vs {:?}",
            noisy.mosaic.shape(),
            clean.mosaic.shape()
        )));
    }
    let num: f64 = noisy.mosaic.data().iter().map(|&v| (v - noisy.black_level) as f64).sum();
    let den: f64 = clean.mosaic.data().iter().map(|&v| (v - clean.black_level) as f64).sum();
    if den <= 0.0 {
        return Err(Error::Invalid(format!("degenerate clean frame: sum above black level is {den}")));
    }
    let gain = num / den;
    Ok(IntensityGain { gain, overexposure_risk: gain < 1.0 })
}

/// Scales the signal (black-level-subtracted) by `gain` and clips to the
/// valid range.
pub fn apply_gain(frame: &RawFrame, gain: f64) -> Result<RawFrame> {
    if gain <= 0.0 {
        return Err(Error::Invalid(format!("gain must be positive, got {gain}")));
    }
    let bl = frame.black_level;
    let wl = frame.white_level;
    let g = gain as f32;
    let mosaic = frame.mosaic.map(|v| ((v - bl) * g + bl).clamp(0.0, wl));
    RawFrame::new(mosaic, frame.pattern, bl, wl)
}

/// Per-channel color temperature: the mean of all channel means over four
/// times the channel's own mean, on black-level-subtracted values.
pub fn channel_temperature(p: &PackedFrame) -> Result<[f64; 4]> {
    let means = p.channel_means();
    if means.iter().any(|&m| m <= 0.0) {
        return Err(Error::Invalid(format!("non-positive channel mean: {means:?}")));
    }
    let total: f64 = means.iter().sum();
    let mut k = [0.0f64; 4];
    for i in 0..4 {
        k[i] = total / (4.0 * means[i]);
    }
    Ok(k)
}

/// Validates that a temperature vector satisfies the defining identity
/// `sum_i 1/(4 K_i) == 1`.
fn validate_temperature(k: &[f64; 4]) -> Result<()> {
    if k.iter().any(|&v| v <= 0.0) {
        return Err(Error::Invalid(format!("temperatures must be positive: {k:?}")));
    }
    let s: f64 = k.iter().map(|&v| 1.0 / (4.0 * v)).sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(Error::Invalid(format!("inconsistent target temperature (sum 1/(4K) = {s})")));
    }
    Ok(())
}

/// Gains that move the measured frame's channel temperatures onto
/// `target_k`, anchored at the red channel (`alpha_R = 1`):
/// `alpha_i = (K̂_R C̄_R) / (K̂_i C̄_i)`.
pub fn color_correction_coeffs(measured: &PackedFrame, target_k: &[f64; 4]) -> Result<[f64; 4]> {
    validate_temperature(target_k)?;
    let means = measured.channel_means();
    if means.iter().any(|&m| m <= 0.0) {
        return Err(Error::Invalid(format!("non-positive channel mean: {means:?}")));
    }
    let mut alpha = [1.0f64; 4];
    for i in 1..4 {
        alpha[i] = (target_k[0] * means[0]) / (target_k[i] * means[i]);
    }
    Ok(alpha)
}

/// Applies per-channel gains on the black-level-subtracted signal.
pub fn apply_color_correction(p: &PackedFrame, alpha: &[f64; 4]) -> Result<PackedFrame> {
    let (h, w) = (p.height(), p.width());
    let bl = p.black_level;
    let wl = p.white_level;
    let mut out = p.channels.data().to_vec();
    for c in 0..4 {
        let a = alpha[c] as f32;
        for v in out[c * h * w..(c + 1) * h * w].iter_mut() {
            *v = ((*v - bl) * a + bl).clamp(0.0, wl);
        }
    }
    PackedFrame::new(rvid_tensor::Tensor::new(vec![4, h, w], out)?, bl, wl)
}
