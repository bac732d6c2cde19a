//! Synthetic moving-pattern clips: procedurally generated clean videos
//! with rigid integer translation, paired with noise-synthesized
//! counterparts. Stands in for captured data at desk scale.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvid_tensor::Tensor;

use crate::error::{Error, Result};
use crate::raw::{pack_bayer, synth_noise, BayerPattern, NoiseModel, PackedFrame, RawFrame, RvdfClip};

pub const GEN_BLACK_LEVEL: f32 = 64.0;
pub const GEN_WHITE_LEVEL: f32 = 1023.0;

/// Per-CFA-channel gains giving the clips a mild color cast.
const CFA_GAINS: [f64; 4] = [0.9, 1.0, 1.0, 0.8];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatternKind {
    Gradient,
    Checker,
    Discs,
}

impl PatternKind {
    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::Gradient => "gradient",
            PatternKind::Checker => "checker",
            PatternKind::Discs => "discs",
        }
    }
}

/// Everything needed to reproduce one clip.
#[derive(Clone, Debug)]
pub struct ClipMeta {
    pub index: usize,
    pub kind: PatternKind,
    /// Rigid translation in mosaic pixels per frame; always even so the
    /// Bayer phase is preserved.
    pub velocity: (i64, i64),
    pub noise_level: u8,
    pub seed: u64,
}

struct PatternParams {
    kind: PatternKind,
    freq: (f64, f64),
    phase: (f64, f64),
    checker_size: i64,
    discs: Vec<(f64, f64, f64)>,
}

/// Pattern intensity in [0,1] at virtual mosaic coordinates, periodic on
/// the `w x h` torus so rigid translation is exact everywhere.
fn pattern_value(p: &PatternParams, x: f64, y: f64, w: f64, h: f64) -> f64 {
    match p.kind {
        PatternKind::Gradient => {
            let a = (2.0 * std::f64::consts::PI * (x * p.freq.0 + y * p.freq.1) + p.phase.0).sin();
            let b = (2.0 * std::f64::consts::PI * (x * p.freq.1 - y * p.freq.0) + p.phase.1).sin();
            0.5 + 0.28 * a + 0.17 * b
        }
        PatternKind::Checker => {
            let s = p.checker_size;
            let xi = (x.floor() as i64).rem_euclid(2 * s);
            let yi = (y.floor() as i64).rem_euclid(2 * s);
            if (xi / s + yi / s) % 2 == 0 {
                0.72
            } else {
                0.28
            }
        }
        PatternKind::Discs => {
            let mut v: f64 = 0.25;
            for &(cx, cy, r) in &p.discs {
                let dx = torus_dist(x - cx, w);
                let dy = torus_dist(y - cy, h);
                v += 0.55 * (-(dx * dx + dy * dy) / (r * r)).exp();
            }
            v.clamp(0.02, 0.98)
        }
    }
}

fn torus_dist(d: f64, extent: f64) -> f64 {
    let m = d.rem_euclid(extent);
    m.min(extent - m)
}

fn render_frame(
    p: &PatternParams,
    shift: (i64, i64),
    h: usize,
    w: usize,
    pattern: BayerPattern,
) -> Result<RawFrame> {
    let offsets = pattern.offsets();
    let span = (GEN_WHITE_LEVEL - GEN_BLACK_LEVEL) as f64;
    let mosaic = Tensor::from_fn(vec![h, w], |idx| {
        let (i, j) = (idx / w, idx % w);
        // which canonical channel does this mosaic position sample?
        let cell = (i % 2, j % 2);
        let chan = offsets.iter().position(|&o| o == cell).unwrap();
        let v = pattern_value(
            p,
            j as f64 - shift.0 as f64,
            i as f64 - shift.1 as f64,
            w as f64,
            h as f64,
        );
        (GEN_BLACK_LEVEL as f64 + span * v.clamp(0.0, 1.0) * CFA_GAINS[chan]).round() as f32
    });
    RawFrame::new(mosaic, pattern, GEN_BLACK_LEVEL, GEN_WHITE_LEVEL)
}

/// Renders the clean packed frames of one clip.
pub fn render_clip(meta: &ClipMeta, t_frames: usize, h: usize, w: usize) -> Result<Vec<PackedFrame>> {
    let params = clip_params(meta, h, w);
    (0..t_frames)
        .map(|t| {
            let shift = (meta.velocity.0 * t as i64, meta.velocity.1 * t as i64);
            let raw = render_frame(&params, shift, h, w, BayerPattern::Rggb)?;
            pack_bayer(&raw)
        })
        .collect()
}

fn clip_params(meta: &ClipMeta, h: usize, w: usize) -> PatternParams {
    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let freq = (rng.random_range(0.015..0.06), rng.random_range(0.015..0.06));
    let phase = (rng.random_range(0.0..6.28), rng.random_range(0.0..6.28));
    let checker_size = rng.random_range(3..9) * 2;
    let discs = (0..3)
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(5.0..11.0),
            )
        })
        .collect();
    PatternParams { kind: meta.kind, freq, phase, checker_size, discs }
}

/// Draws per-clip metadata. `noise_level == 0` picks a random level per
/// clip, anything in 1..=5 pins it.
pub fn clip_metas(n_clips: usize, noise_level: u8, seed: u64) -> Result<Vec<ClipMeta>> {
    if noise_level > 5 {
        return Err(Error::Config(format!("noise level {noise_level} outside 0..=5")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_clips)
        .map(|index| {
            let kind = match rng.random_range(0..3) {
                0 => PatternKind::Gradient,
                1 => PatternKind::Checker,
                _ => PatternKind::Discs,
            };
            // even components, not both zero
            let mut vel = (0i64, 0i64);
            while vel == (0, 0) {
                vel = (rng.random_range(-2..=2i64) * 2, rng.random_range(-2..=2i64) * 2);
            }
            let level = if noise_level == 0 { rng.random_range(1..=5) } else { noise_level };
            ClipMeta { index, kind, velocity: vel, noise_level: level, seed: seed ^ ((index as u64) << 20) }
        })
        .collect())
}

/// Generates `n_clips` clean/noisy packed clip pairs under `out_dir`,
/// writing `clean_NNN.rvdf`, `noisy_NNN.rvdf` and a `manifest.csv`.
/// Byte-identical for a fixed seed.
pub fn gen_synthetic_dataset(
    out_dir: impl AsRef<Path>,
    n_clips: usize,
    t_frames: usize,
    h: usize,
    w: usize,
    model: &NoiseModel,
    noise_level: u8,
    seed: u64,
) -> Result<Vec<ClipMeta>> {
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Invalid(format!("mosaic extents {h}x{w} must be even")));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let metas = clip_metas(n_clips, noise_level, seed)?;
    let mut manifest = String::from("clip,kind,vx,vy,noise_level,seed\n");
    for meta in &metas {
        let clean = render_clip(meta, t_frames, h, w)?;
        let noisy: Vec<PackedFrame> = clean
            .iter()
            .enumerate()
            .map(|(t, f)| synth_noise(f, model, meta.noise_level, meta.seed.wrapping_add(t as u64 + 1)))
            .collect::<Result<_>>()?;
        RvdfClip::from_packed_frames(&clean, BayerPattern::Rggb)?
            .save(out_dir.join(format!("clean_{:03}.rvdf", meta.index)))?;
        RvdfClip::from_packed_frames(&noisy, BayerPattern::Rggb)?
            .save(out_dir.join(format!("noisy_{:03}.rvdf", meta.index)))?;
        writeln!(
            manifest,
            "{},{},{},{},{},{}",
            meta.index,
            meta.kind.name(),
            meta.velocity.0,
            meta.velocity.1,
            meta.noise_level,
            meta.seed
        )
        .unwrap();
    }
    let mpath = out_dir.join("manifest.csv");
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(mpath.display().to_string(), e))?;
    Ok(metas)
}
