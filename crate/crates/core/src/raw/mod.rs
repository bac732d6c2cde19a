//! Bayer raw frames, channel packing and the post-processing math that
//! aligns noisy/clean pairs: intensity gain, color correction, flow
//! application, neighbour subsampling, noise synthesis and the toy ISP.

mod correct;
mod isp;
mod noise;
mod rvdf;
mod sampler;
mod warp;

pub use correct::{
    apply_color_correction, apply_gain, channel_temperature, color_correction_coeffs,
    intensity_gain, IntensityGain,
};
pub use isp::{toy_isp, toy_isp_graph, ISP_GAINS, ISP_GAMMA};
pub use noise::{synth_noise, NoiseModel};
pub use rvdf::RvdfClip;
pub use sampler::{neighbor_positions, neighbor_subsample_pair, subsample_with, CellDraw};
pub use warp::{warp_packed, FlowField};

use rvid_tensor::Tensor;

use crate::error::{Error, Result};

/// Color filter array layout of the 2x2 Bayer cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BayerPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl BayerPattern {
    pub fn code(self) -> u8 {
        match self {
            BayerPattern::Rggb => 0,
            BayerPattern::Bggr => 1,
            BayerPattern::Grbg => 2,
            BayerPattern::Gbrg => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => BayerPattern::Rggb,
            1 => BayerPattern::Bggr,
            2 => BayerPattern::Grbg,
            3 => BayerPattern::Gbrg,
            c => return Err(Error::Format(format!("unknown Bayer pattern code {c}"))),
        })
    }

    /// Position of each canonical channel (R, Gr, Gb, B) inside the 2x2
    /// cell, as (row, col) offsets.
    pub fn offsets(self) -> [(usize, usize); 4] {
        match self {
            BayerPattern::Rggb => [(0, 0), (0, 1), (1, 0), (1, 1)],
            BayerPattern::Bggr => [(1, 1), (1, 0), (0, 1), (0, 0)],
            BayerPattern::Grbg => [(0, 1), (0, 0), (1, 1), (1, 0)],
            BayerPattern::Gbrg => [(1, 0), (1, 1), (0, 0), (0, 1)],
        }
    }

    pub const ALL: [BayerPattern; 4] =
        [BayerPattern::Rggb, BayerPattern::Bggr, BayerPattern::Grbg, BayerPattern::Gbrg];
}

/// Bayer mosaic with its signal range annotations.
#[derive(Clone, Debug)]
pub struct RawFrame {
    pub mosaic: Tensor<f32>,
    pub pattern: BayerPattern,
    pub black_level: f32,
    pub white_level: f32,
}

impl RawFrame {
    pub fn new(mosaic: Tensor<f32>, pattern: BayerPattern, black_level: f32, white_level: f32) -> Result<Self> {
        if mosaic.rank() != 2 || mosaic.shape()[0] % 2 != 0 || mosaic.shape()[1] % 2 != 0 {
            return Err(Error::Invalid(format!(
                "mosaic must be 2-D with even extents, got {:?}",
                mosaic.shape()
            )));
        }
        if !(black_level < white_level) {
            return Err(Error::Invalid(format!(
                "black level {black_level} must be below white level {white_level}"
            )));
        }
        if mosaic.data().iter().any(|&v| !(0.0..=white_level).contains(&v)) {
            return Err(Error::Invalid("mosaic values outside [0, white_level]".into()));
        }
        Ok(RawFrame { mosaic, pattern, black_level, white_level })
    }

    pub fn height(&self) -> usize {
        self.mosaic.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.mosaic.shape()[1]
    }
}

/// Half-resolution 4-channel form of a mosaic, channels in canonical
/// (R, Gr, Gb, B) order regardless of the source pattern.
#[derive(Clone, Debug)]
pub struct PackedFrame {
    pub channels: Tensor<f32>,
    pub black_level: f32,
    pub white_level: f32,
}

impl PackedFrame {
    pub fn new(channels: Tensor<f32>, black_level: f32, white_level: f32) -> Result<Self> {
        if channels.rank() != 3 || channels.shape()[0] != 4 {
            return Err(Error::Invalid(format!("packed frame must be [4,H,W], got {:?}", channels.shape())));
        }
        Ok(PackedFrame { channels, black_level, white_level })
    }

    pub fn height(&self) -> usize {
        self.channels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.channels.shape()[2]
    }

    /// Mean of each channel after black-level subtraction.
    pub fn channel_means(&self) -> [f64; 4] {
        let (h, w) = (self.height(), self.width());
        let mut means = [0.0f64; 4];
        for (c, m) in means.iter_mut().enumerate() {
            let s: f64 = self.channels.data()[c * h * w..(c + 1) * h * w]
                .iter()
                .map(|&v| (v - self.black_level) as f64)
                .sum();
            *m = s / (h * w) as f64;
        }
        means
    }
}

/// Rearranges 2x2 Bayer cells into 4 half-resolution channels.
pub fn pack_bayer(f: &RawFrame) -> Result<PackedFrame> {
    let (h, w) = (f.height(), f.width());
    let (hp, wp) = (h / 2, w / 2);
    let offsets = f.pattern.offsets();
    let mut out = vec![0.0f32; 4 * hp * wp];
    for (c, &(oy, ox)) in offsets.iter().enumerate() {
        for i in 0..hp {
            for j in 0..wp {
                out[(c * hp + i) * wp + j] = f.mosaic.data()[(2 * i + oy) * w + 2 * j + ox];
            }
        }
    }
    PackedFrame::new(Tensor::new(vec![4, hp, wp], out)?, f.black_level, f.white_level)
}

/// Exact inverse of [`pack_bayer`] for the given pattern.
pub fn unpack_bayer(p: &PackedFrame, pattern: BayerPattern) -> Result<RawFrame> {
    let (hp, wp) = (p.height(), p.width());
    let (h, w) = (2 * hp, 2 * wp);
    let offsets = pattern.offsets();
    let mut out = vec![0.0f32; h * w];
    for (c, &(oy, ox)) in offsets.iter().enumerate() {
        for i in 0..hp {
            for j in 0..wp {
                out[(2 * i + oy) * w + 2 * j + ox] = p.channels.data()[(c * hp + i) * wp + j];
            }
        }
    }
    RawFrame::new(Tensor::new(vec![h, w], out)?, pattern, p.black_level, p.white_level)
}

/// Packed values normalized to the unit signal range `(x - bl) / (wl - bl)`.
/// Noise can push values slightly below zero; they are kept as-is.
pub fn normalize_packed(p: &PackedFrame) -> Tensor<f32> {
    let scale = 1.0 / (p.white_level - p.black_level);
    p.channels.map(|v| (v - p.black_level) * scale)
}

/// Inverse of [`normalize_packed`], clipped to the valid range.
pub fn denormalize_packed(t: &Tensor<f32>, black_level: f32, white_level: f32) -> Result<PackedFrame> {
    let span = white_level - black_level;
    let channels = t.map(|v| (v * span + black_level).clamp(0.0, white_level));
    PackedFrame::new(channels, black_level, white_level)
}
