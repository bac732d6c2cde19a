//! Run configuration: defaults, the flat `key=value` config file format,
//! and validation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::attn::BranchToggles;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Preset};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sup,
    Unsup,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sup" => Ok(Mode::Sup),
            "unsup" => Ok(Mode::Unsup),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected sup|unsup)"))),
        }
    }
}

/// Everything a run needs. Field defaults follow the training recipe:
/// learning rate 1e-4 dropping to 5e-5 and 2e-5 at 2/6 and 5/6 of the
/// run, batch 1, patch 64, six frames per clip.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub preset: Preset,
    pub epochs: usize,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub lr_start: f64,
    pub lr_mid: f64,
    pub lr_end: f64,
    pub lr_frac1: f64,
    pub lr_frac2: f64,
    pub batch: usize,
    pub patch: usize,
    pub frames: usize,
    pub clips: usize,
    pub noise_level: u8,
    pub window: usize,
    pub neighbor_factor: usize,
    pub mlp_ratio: usize,
    pub dropout: f64,
    pub use_lwsa: bool,
    pub use_gn_spatial: bool,
    pub use_gn_temporal: bool,
    pub val_every: usize,
    pub beta1: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Sup,
            preset: Preset::Micro,
            epochs: 20,
            seed: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/out"),
            lr_start: 1e-4,
            lr_mid: 5e-5,
            lr_end: 2e-5,
            lr_frac1: 2.0 / 6.0,
            lr_frac2: 5.0 / 6.0,
            batch: 1,
            patch: 64,
            frames: 6,
            clips: 40,
            noise_level: 3,
            window: 8,
            neighbor_factor: 3,
            mlp_ratio: 2,
            dropout: 0.0,
            use_lwsa: true,
            use_gn_spatial: true,
            use_gn_temporal: true,
            val_every: 1,
            beta1: 0.5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_frac1 > 0.0 && self.lr_frac1 < self.lr_frac2 && self.lr_frac2 < 1.0) {
            return Err(Error::Config(format!(
                "schedule fractions must satisfy 0 < {} < {} < 1",
                self.lr_frac1, self.lr_frac2
            )));
        }
        if self.batch != 1 {
            return Err(Error::Config("only batch = 1 is supported".into()));
        }
        if self.patch % 2 != 0 {
            return Err(Error::Config("patch must be even (mosaic extents)".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        Ok(())
    }

    /// Model hyper-parameters implied by this run.
    pub fn model_config(&self) -> ModelConfig {
        let mut cfg = ModelConfig::preset(self.preset);
        cfg.window = (self.window, self.window);
        cfg.neighbor_factor = self.neighbor_factor;
        cfg.mlp_ratio = self.mlp_ratio;
        cfg.dropout = self.dropout;
        cfg.toggles = BranchToggles {
            lwsa: self.use_lwsa,
            gn_spatial: self.use_gn_spatial,
            gn_temporal: self.use_gn_temporal,
        };
        cfg
    }

    /// Learning rate at a training step.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        let frac = if total_steps == 0 { 0.0 } else { step as f64 / total_steps as f64 };
        if frac < self.lr_frac1 {
            self.lr_start
        } else if frac < self.lr_frac2 {
            self.lr_mid
        } else {
            self.lr_end
        }
    }

    /// Applies `key=value` lines, rejecting unknown keys.
    pub fn apply_kv(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in pairs {
            self.apply_one(key, value)?;
        }
        Ok(())
    }

    fn apply_one(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|_| {
                    Error::Config(format!("bad value `{value}` for key `{key}`"))
                })?
            };
        }
        match key {
            "mode" => self.mode = Mode::parse(value)?,
            "preset" => self.preset = Preset::parse(value)?,
            "epochs" => self.epochs = parse!(usize),
            "seed" => self.seed = parse!(u64),
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "lr_start" => self.lr_start = parse!(f64),
            "lr_mid" => self.lr_mid = parse!(f64),
            "lr_end" => self.lr_end = parse!(f64),
            "lr_frac1" => self.lr_frac1 = parse!(f64),
            "lr_frac2" => self.lr_frac2 = parse!(f64),
            "batch" => self.batch = parse!(usize),
            "patch" => self.patch = parse!(usize),
            "frames" => self.frames = parse!(usize),
            "clips" => self.clips = parse!(usize),
            "noise_level" => self.noise_level = parse!(u8),
            "window" => self.window = parse!(usize),
            "neighbor_factor" => self.neighbor_factor = parse!(usize),
            "mlp_ratio" => self.mlp_ratio = parse!(usize),
            "dropout" => self.dropout = parse!(f64),
            "use_lwsa" => self.use_lwsa = parse_bool(key, value)?,
            "use_gn_spatial" => self.use_gn_spatial = parse_bool(key, value)?,
            "use_gn_temporal" => self.use_gn_temporal = parse_bool(key, value)?,
            "val_every" => self.val_every = parse!(usize),
            "beta1" => self.beta1 = parse!(f64),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Config(format!("bad boolean `{other}` for key `{key}`"))),
    }
}

/// Parses the flat UTF-8 `key=value` format with `#` comments.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key=value, got `{raw}`", lineno + 1)));
        };
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_unknown_keys() {
        let text = "# a comment\nepochs = 5   # trailing\nseed=9\n";
        let kv = parse_config_text(text).unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_kv(&kv).unwrap();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.seed, 9);

        let bad = parse_config_text("nonsense_key=1\n").unwrap();
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_kv(&bad).is_err());
    }

    #[test]
    fn schedule_fractions_validated() {
        let mut cfg = RunConfig::default();
        cfg.lr_frac1 = 0.9;
        cfg.lr_frac2 = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lr_schedule_has_two_drops() {
        let cfg = RunConfig::default();
        let total = 600;
        assert_eq!(cfg.lr_at(0, total), 1e-4);
        assert_eq!(cfg.lr_at(200, total), 5e-5);
        assert_eq!(cfg.lr_at(599, total), 2e-5);
    }
}
