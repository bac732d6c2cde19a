//! Heteroscedastic Gaussian noise synthesis standing in for sensor capture.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rvid_tensor::Tensor;

use crate::error::{Error, Result};

use super::PackedFrame;

/// Signal-dependent noise parameters per synthetic ISO level 1..=5, in
/// normalized signal units: the variance at normalized intensity `x` is
/// `a*x + b`. Defaults double per level from (0.01, 0.0001).
#[derive(Clone, Debug)]
pub struct NoiseModel {
    levels: [(f64, f64); 5],
}

impl NoiseModel {
    pub fn new(levels: [(f64, f64); 5]) -> Result<Self> {
        if levels.iter().any(|&(a, b)| a < 0.0 || b < 0.0) {
            return Err(Error::Invalid("noise parameters must be non-negative".into()));
        }
        Ok(NoiseModel { levels })
    }

    pub fn params(&self, level: u8) -> Result<(f64, f64)> {
        if !(1..=5).contains(&level) {
            return Err(Error::Invalid(format!("noise level {level} outside 1..=5")));
        }
        Ok(self.levels[(level - 1) as usize])
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        let mut levels = [(0.0, 0.0); 5];
        let (mut a, mut b) = (0.01, 0.0001);
        for l in levels.iter_mut() {
            *l = (a, b);
            a *= 2.0;
            b *= 2.0;
        }
        NoiseModel { levels }
    }
}

/// Adds zero-mean Gaussian noise with variance `a*x_norm + b` (normalized
/// units) on the black-level-subtracted signal, then clips to the valid
/// range. Bit-identical for a fixed seed.
pub fn synth_noise(clean: &PackedFrame, model: &NoiseModel, level: u8, seed: u64) -> Result<PackedFrame> {
    let (a, b) = model.params(level)?;
    let bl = clean.black_level as f64;
    let wl = clean.white_level as f64;
    let span = wl - bl;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = clean
        .channels
        .data()
        .iter()
        .map(|&v| {
            let x_norm = ((v as f64 - bl) / span).max(0.0);
            let sigma = (a * x_norm + b).sqrt();
            let n: f64 = StandardNormal.sample(&mut rng);
            ((v as f64 + n * sigma * span).clamp(0.0, wl)) as f32
        })
        .collect();
    PackedFrame::new(
        Tensor::new(clean.channels.shape().to_vec(), data)?,
        clean.black_level,
        clean.white_level,
    )
}
