//! `rvid` command line: synthetic data generation, training, evaluation,
//! checkpoint fusion and gradient checking.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rvid_core::data::gen_synthetic_dataset;
use rvid_core::gradcheck::{format_report, gradcheck_all};
use rvid_core::model::plan::{plan_model, store_is_fused, validate_store};
use rvid_core::model::{count_macs, forward_clip, stack_frames};
use rvid_core::params::ParamStore;
use rvid_core::raw::NoiseModel;
use rvid_core::reparam::fuse_store;
use rvid_core::runconfig::{parse_config_text, RunConfig};
use rvid_core::session::Session;
use rvid_core::train::{evaluate, load_dataset, split_train_val, train};
use rvid_core::{Error, Result};
use rvid_tensor::Tensor;

#[derive(Parser)]
#[command(name = "rvid", about = "Raw video denoising toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; CLI flags override config-file keys.
#[derive(Args, Clone)]
struct Common {
    /// Flat key=value config file (UTF-8, `#` comments, unknown keys error)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model preset
    #[arg(long)]
    preset: Option<String>,
    /// Training mode
    #[arg(long)]
    mode: Option<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clean/noisy clip dataset
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a generated dataset
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint: per-clip and mean PSNR/SSIM, raw and sRGB
    Eval {
        /// Checkpoint to evaluate
        ckpt: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Expect (and run) the fused inference topology
        #[arg(long)]
        fused: bool,
    },
    /// Fuse a training checkpoint into the inference topology
    Fuse {
        /// Training-topology checkpoint
        input: PathBuf,
        /// Output path for the fused store
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient report across all operations
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

fn load_run_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        cfg.apply_kv(&parse_config_text(&text)?)?;
    }
    let mut overrides: BTreeMap<String, String> = BTreeMap::new();
    if let Some(p) = &common.preset {
        overrides.insert("preset".into(), p.clone());
    }
    if let Some(m) = &common.mode {
        overrides.insert("mode".into(), m.clone());
    }
    if let Some(s) = common.seed {
        overrides.insert("seed".into(), s.to_string());
    }
    if let Some(d) = &common.data {
        overrides.insert("data_dir".into(), d.display().to_string());
    }
    if let Some(o) = &common.out {
        overrides.insert("out_dir".into(), o.display().to_string());
    }
    cfg.apply_kv(&overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen { common } => {
            let cfg = load_run_config(&common)?;
            let metas = gen_synthetic_dataset(
                &cfg.out_dir,
                cfg.clips,
                cfg.frames,
                cfg.patch,
                cfg.patch,
                &NoiseModel::default(),
                cfg.noise_level,
                cfg.seed,
            )?;
            println!(
                "wrote {} clip pairs ({} frames of {}x{} mosaic) to {}",
                metas.len(),
                cfg.frames,
                cfg.patch,
                cfg.patch,
                cfg.out_dir.display()
            );
        }
        Command::Train { common, epochs } => {
            let mut cfg = load_run_config(&common)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let report = train(&cfg)?;
            println!(
                "trained {} steps; final loss {:.6}; validation raw PSNR {:.3} dB (noisy baseline {:.3} dB)",
                report.steps, report.final_loss, report.val_psnr_raw, report.baseline_psnr_raw
            );
            println!("checkpoint: {}", report.checkpoint_path.display());
        }
        Command::Eval { ckpt, common, fused } => {
            let cfg = load_run_config(&common)?;
            let plan = plan_model(&cfg.model_config())?;
            let store = ParamStore::load(&ckpt)?;
            validate_store(&plan, &store, fused)?;
            let pairs = load_dataset(&cfg.data_dir)?;
            let (_, val) = split_train_val(&pairs);
            let report = evaluate(&plan, &store, &val, fused)?;
            println!("clip,psnr_raw,psnr_srgb,ssim_raw,ssim_srgb,baseline_psnr_raw");
            for r in &report.rows {
                println!(
                    "{},{:.4},{:.4},{:.6},{:.6},{:.4}",
                    r.clip, r.psnr_raw, r.psnr_srgb, r.ssim_raw, r.ssim_srgb, r.baseline_psnr_raw
                );
            }
            println!(
                "mean,{:.4},{:.4},{:.6},{:.6},{:.4}",
                report.mean_psnr_raw,
                report.mean_psnr_srgb,
                report.mean_ssim_raw,
                report.mean_ssim_srgb,
                report.mean_baseline_psnr_raw
            );
        }
        Command::Fuse { input, output, common } => {
            let cfg = load_run_config(&common)?;
            let plan = plan_model(&cfg.model_config())?;
            let store = ParamStore::load(&input)?;
            if store_is_fused(&store) {
                return Err(Error::AlreadyFused(input.display().to_string()));
            }
            validate_store(&plan, &store, false)?;
            let fused = fuse_store(&plan, &store)?;
            fused.save(&output)?;
            // equivalence report on random probe clips
            let mut worst = 0.0f64;
            for probe in 0..3u64 {
                let clip = probe_clip(cfg.seed.wrapping_add(probe), cfg.frames.min(2));
                let mut a = Session::inference(&store);
                let oa = forward_clip(&mut a, &plan, &clip, false)?;
                let sa = stack_frames(&mut a, &oa)?;
                let mut b = Session::inference(&fused);
                let ob = forward_clip(&mut b, &plan, &clip, true)?;
                let sb = stack_frames(&mut b, &ob)?;
                worst = worst.max(a.value(sa).max_abs_diff(b.value(sb)));
            }
            let unfused_macs = count_macs(&plan, 2, 64, 64, false)?;
            let fused_macs = count_macs(&plan, 2, 64, 64, true)?;
            println!(
                "fused {} -> {} params; max |fused - unfused| over probes: {:.3e}; \
                 MACs (T=2, 64x64): {} -> {}",
                store.param_count(),
                fused.param_count(),
                worst,
                unfused_macs,
                fused_macs
            );
            println!("wrote {}", output.display());
        }
        Command::Gradcheck { common } => {
            let cfg = load_run_config(&common)?;
            let rows = gradcheck_all(cfg.seed)?;
            print!("{}", format_report(&rows));
            if rows.iter().any(|r| !r.pass) {
                return Err(Error::Invalid("gradient check failed".into()));
            }
        }
    }
    Ok(())
}

fn probe_clip(seed: u64, frames: usize) -> Tensor<f32> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(vec![frames.max(2), 4, 32, 32], |_| rng.random_range(0.05..0.95))
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
