//! "RVDF" raw-clip container.
//!
//! Layout: magic `RVDF`, version byte 0x01, little-endian u32 fields
//! (frames T, height H, width W, channels in {1,4}), u16 black level,
//! u16 white level, u8 pattern code, then T*C*H*W little-endian u16
//! samples, frame-major then channel-major then row-major.

use std::io::{Read, Write};
use std::path::Path;

use rvid_tensor::Tensor;

use crate::error::{Error, Result};

use super::{BayerPattern, PackedFrame, RawFrame};

const MAGIC: &[u8; 4] = b"RVDF";
const VERSION: u8 = 0x01;

/// In-memory raw clip; `channels` is 1 for mosaic data, 4 for packed data.
/// For packed clips H and W are the packed (half-resolution) extents.
#[derive(Clone, Debug)]
pub struct RvdfClip {
    pub frames: u32,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub black_level: u16,
    pub white_level: u16,
    pub pattern: BayerPattern,
    pub samples: Vec<u16>,
}

impl RvdfClip {
    pub fn new(
        frames: u32,
        height: u32,
        width: u32,
        channels: u32,
        black_level: u16,
        white_level: u16,
        pattern: BayerPattern,
        samples: Vec<u16>,
    ) -> Result<Self> {
        if channels != 1 && channels != 4 {
            return Err(Error::Format(format!("RVDF: channels must be 1 or 4, got {channels}")));
        }
        let expect = frames as usize * channels as usize * height as usize * width as usize;
        if samples.len() != expect {
            return Err(Error::Format(format!("RVDF: expected {expect} samples, got {}", samples.len())));
        }
        Ok(RvdfClip { frames, height, width, channels, black_level, white_level, pattern, samples })
    }

    pub fn from_packed_frames(frames: &[PackedFrame], pattern: BayerPattern) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Invalid("empty clip".into()))?;
        let (h, w) = (first.height(), first.width());
        let mut samples = Vec::with_capacity(frames.len() * 4 * h * w);
        for f in frames {
            if f.height() != h || f.width() != w {
                return Err(Error::Invalid("frame extents differ within clip".into()));
            }
            samples.extend(f.channels.data().iter().map(|&v| v.round().clamp(0.0, 65535.0) as u16));
        }
        RvdfClip::new(
            frames.len() as u32,
            h as u32,
            w as u32,
            4,
            first.black_level as u16,
            first.white_level as u16,
            pattern,
            samples,
        )
    }

    pub fn from_raw_frames(frames: &[RawFrame]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Invalid("empty clip".into()))?;
        let (h, w) = (first.height(), first.width());
        let mut samples = Vec::with_capacity(frames.len() * h * w);
        for f in frames {
            if f.height() != h || f.width() != w {
                return Err(Error::Invalid("frame extents differ within clip".into()));
            }
            samples.extend(f.mosaic.data().iter().map(|&v| v.round().clamp(0.0, 65535.0) as u16));
        }
        RvdfClip::new(
            frames.len() as u32,
            h as u32,
            w as u32,
            1,
            first.black_level as u16,
            first.white_level as u16,
            first.pattern,
            samples,
        )
    }

    pub fn to_packed_frames(&self) -> Result<Vec<PackedFrame>> {
        if self.channels != 4 {
            return Err(Error::Format("RVDF: clip is not packed (channels != 4)".into()));
        }
        let (h, w) = (self.height as usize, self.width as usize);
        let per = 4 * h * w;
        (0..self.frames as usize)
            .map(|t| {
                let data: Vec<f32> = self.samples[t * per..(t + 1) * per].iter().map(|&v| v as f32).collect();
                PackedFrame::new(
                    Tensor::new(vec![4, h, w], data).map_err(Error::Tensor)?,
                    self.black_level as f32,
                    self.white_level as f32,
                )
            })
            .collect()
    }

    pub fn to_raw_frames(&self) -> Result<Vec<RawFrame>> {
        if self.channels != 1 {
            return Err(Error::Format("RVDF: clip is not mosaic (channels != 1)".into()));
        }
        let (h, w) = (self.height as usize, self.width as usize);
        let per = h * w;
        (0..self.frames as usize)
            .map(|t| {
                let data: Vec<f32> = self.samples[t * per..(t + 1) * per].iter().map(|&v| v as f32).collect();
                RawFrame::new(
                    Tensor::new(vec![h, w], data).map_err(Error::Tensor)?,
                    self.pattern,
                    self.black_level as f32,
                    self.white_level as f32,
                )
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(27 + self.samples.len() * 2);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        for v in [self.frames, self.height, self.width, self.channels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.black_level.to_le_bytes());
        out.extend_from_slice(&self.white_level.to_le_bytes());
        out.push(self.pattern.code());
        for &s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 26 || &bytes[..4] != MAGIC {
            return Err(Error::Format("RVDF: bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("RVDF: unsupported version {}", bytes[4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let frames = u32_at(5);
        let height = u32_at(9);
        let width = u32_at(13);
        let channels = u32_at(17);
        let black_level = u16::from_le_bytes(bytes[21..23].try_into().unwrap());
        let white_level = u16::from_le_bytes(bytes[23..25].try_into().unwrap());
        let pattern = BayerPattern::from_code(bytes[25])?;
        let n = frames as usize * channels as usize * height as usize * width as usize;
        if bytes.len() != 26 + 2 * n {
            return Err(Error::Format(format!(
                "RVDF: expected {} bytes of samples, found {}",
                2 * n,
                bytes.len() - 26
            )));
        }
        let samples: Vec<u16> = bytes[26..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        RvdfClip::new(frames, height, width, channels, black_level, white_level, pattern, samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}
