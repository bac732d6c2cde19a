//! Training loop, optimizer, dataset loading and evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rvid_tensor::Tensor;

use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::model::loss::{beta2_schedule, supervised_loss, unsupervised_loss};
use crate::model::plan::{init_params, validate_store, ModelPlan};
use crate::model::{forward_clip, plan_model};
use crate::params::{GradientRecord, ParamStore};
use crate::raw::{normalize_packed, toy_isp_graph, RvdfClip};
use crate::runconfig::{Mode, RunConfig};
use crate::session::Session;

/// Adaptive per-parameter first-order optimizer with bias-corrected moment
/// estimates (0.9 / 0.999, eps 1e-8). State iterates in name order so
/// updates are deterministic.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: std::collections::BTreeMap<String, Vec<f64>>,
    v: std::collections::BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Default::default(), v: Default::default() }
    }

    pub fn step(&mut self, store: &mut ParamStore<f32>, grads: &GradientRecord<f32>, lr: f64) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let names: Vec<String> = grads.iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let g = grads.get(&name).unwrap();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let mut value = store.get(&name)?.value.clone();
            value.update_in_place(|i, p| {
                let gi = g.data()[i] as f64;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                (p as f64 - lr * mh / (vh.sqrt() + self.eps)) as f32
            });
            store.set_value(&name, value)?;
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

/// One noisy/clean clip pair, normalized to unit signal range.
#[derive(Clone)]
pub struct ClipPair {
    pub index: usize,
    pub noisy: Tensor<f32>,
    pub clean: Option<Tensor<f32>>,
}

fn clip_tensor(clip: &RvdfClip) -> Result<Tensor<f32>> {
    let frames = clip.to_packed_frames()?;
    let (h, w) = (frames[0].height(), frames[0].width());
    let mut data = Vec::with_capacity(frames.len() * 4 * h * w);
    for f in &frames {
        data.extend_from_slice(normalize_packed(f).data());
    }
    Tensor::new(vec![frames.len(), 4, h, w], data).map_err(Error::Tensor)
}

/// Loads `noisy_*.rvdf` (+ matching `clean_*.rvdf` when present) pairs.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<ClipPair>> {
    let dir = dir.as_ref();
    let mut indices: Vec<usize> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let idx = name.strip_prefix("noisy_")?.strip_suffix(".rvdf")?;
            idx.parse::<usize>().ok()
        })
        .collect();
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(Error::Invalid(format!("no noisy_*.rvdf clips under {}", dir.display())));
    }
    indices
        .into_iter()
        .map(|index| {
            let noisy = clip_tensor(&RvdfClip::load(dir.join(format!("noisy_{index:03}.rvdf")))?)?;
            let clean_path = dir.join(format!("clean_{index:03}.rvdf"));
            let clean = if clean_path.exists() {
                Some(clip_tensor(&RvdfClip::load(clean_path)?)?)
            } else {
                None
            };
            Ok(ClipPair { index, noisy, clean })
        })
        .collect()
}

/// Last 10% of the clips (at least one) are held out for validation.
pub fn split_train_val(pairs: &[ClipPair]) -> (Vec<&ClipPair>, Vec<&ClipPair>) {
    let n_val = (pairs.len() / 10).max(1).min(pairs.len().saturating_sub(1).max(1));
    let cut = pairs.len() - n_val;
    (pairs[..cut].iter().collect(), pairs[cut..].iter().collect())
}

pub struct TrainReport {
    pub steps: usize,
    pub final_loss: f64,
    pub val_psnr_raw: f64,
    pub baseline_psnr_raw: f64,
    pub store: ParamStore<f32>,
    pub csv: String,
    pub checkpoint_path: PathBuf,
}

/// Full training run per the run configuration; deterministic for a fixed
/// seed. Writes `ckpt_init.rvps`, `ckpt_final.rvps` and `metrics.csv`
/// under the output directory.
pub fn train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let mcfg = cfg.model_config();
    let plan = plan_model(&mcfg)?;
    let mut store = init_params(&plan, cfg.seed)?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))?;
    store.save(cfg.out_dir.join("ckpt_init.rvps"))?;

    let pairs = load_dataset(&cfg.data_dir)?;
    if cfg.mode == Mode::Sup && pairs.iter().any(|p| p.clean.is_none()) {
        return Err(Error::Invalid("supervised mode needs clean_*.rvdf targets".into()));
    }
    let (train_set, val_set) = split_train_val(&pairs);
    let total_steps = cfg.epochs * train_set.len();
    let mut adam = Adam::new();
    let mut csv = String::from("step,loss,lr,psnr_raw,psnr_srgb,ssim_raw,ssim_srgb\n");
    let mut step = 0usize;
    let mut last_loss = f64::NAN;
    let mut val_psnr = f64::NAN;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1000 + epoch as u64));
        order.shuffle(&mut rng);
        for &ci in &order {
            let pair = train_set[ci];
            let lr = cfg.lr_at(step, total_steps);
            let mut sess = Session::new(&store);
            sess.g.set_training(true);
            sess.g.seed_rng(cfg.seed.wrapping_add(step as u64));
            let loss_var = match cfg.mode {
                Mode::Sup => {
                    let clean = pair.clean.as_ref().expect("checked above");
                    supervised_loss(&mut sess, &plan, &pair.noisy, clean, cfg.beta1, false)?
                }
                Mode::Unsup => {
                    let beta2 = beta2_schedule(epoch, cfg.epochs);
                    unsupervised_loss(
                        &mut sess,
                        &plan,
                        &store,
                        &pair.noisy,
                        cfg.seed.wrapping_add(77 + step as u64),
                        beta2,
                        false,
                    )?
                    .loss
                }
            };
            let loss = sess.value(loss_var).item() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite { what: format!("{:?} loss {loss}", cfg.mode), step });
            }
            let grads = sess.grads(loss_var)?;
            adam.step(&mut store, &grads, lr)?;
            last_loss = loss;
            step += 1;
            let is_val_step = step == total_steps
                || (cfg.val_every > 0 && step % (cfg.val_every * train_set.len()) == 0);
            if is_val_step {
                let ev = evaluate(&plan, &store, &val_set, false)?;
                val_psnr = ev.mean_psnr_raw;
                writeln!(
                    csv,
                    "{step},{loss},{lr},{},{},{},{}",
                    ev.mean_psnr_raw, ev.mean_psnr_srgb, ev.mean_ssim_raw, ev.mean_ssim_srgb
                )
                .unwrap();
            } else {
                writeln!(csv, "{step},{loss},{lr},,,,").unwrap();
            }
        }
    }
    if cfg.epochs == 0 {
        let ev = evaluate(&plan, &store, &val_set, false)?;
        val_psnr = ev.mean_psnr_raw;
    }
    let baseline = noisy_baseline(&val_set)?;
    let ckpt = cfg.out_dir.join("ckpt_final.rvps");
    store.save(&ckpt)?;
    let csv_path = cfg.out_dir.join("metrics.csv");
    std::fs::write(&csv_path, &csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    Ok(TrainReport {
        steps: step,
        final_loss: last_loss,
        val_psnr_raw: val_psnr,
        baseline_psnr_raw: baseline,
        store,
        csv,
        checkpoint_path: ckpt,
    })
}

/// PSNR of the noisy inputs against the clean targets.
pub fn noisy_baseline(set: &[&ClipPair]) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for pair in set {
        let Some(clean) = &pair.clean else { continue };
        acc += psnr(&pair.noisy, clean, 1.0);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid("no clean targets for baseline".into()));
    }
    Ok(acc / n as f64)
}

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub clip: usize,
    pub psnr_raw: f64,
    pub psnr_srgb: f64,
    pub ssim_raw: f64,
    pub ssim_srgb: f64,
    pub baseline_psnr_raw: f64,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_psnr_raw: f64,
    pub mean_psnr_srgb: f64,
    pub mean_ssim_raw: f64,
    pub mean_ssim_srgb: f64,
    pub mean_baseline_psnr_raw: f64,
}

/// Deterministic per-clip and mean metrics in raw and sRGB domains,
/// alongside the noisy-input baseline.
pub fn evaluate(
    plan: &ModelPlan,
    store: &ParamStore<f32>,
    set: &[&ClipPair],
    fused: bool,
) -> Result<EvalReport> {
    validate_store(plan, store, fused)?;
    let mut rows = Vec::with_capacity(set.len());
    for pair in set {
        let clean = pair
            .clean
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("clip {} has no clean target", pair.index)))?;
        let mut sess = Session::inference(store);
        let outs = forward_clip(&mut sess, plan, &pair.noisy, fused)?;
        let stacked = {
            let v = crate::model::stack_frames(&mut sess, &outs)?;
            sess.value(v).clone()
        };
        let t_frames = clean.shape()[0];
        let (h, w) = (clean.shape()[2], clean.shape()[3]);
        let mut ssim_raw = 0.0;
        let mut ssim_srgb = 0.0;
        let mut srgb_out_all = Vec::new();
        let mut srgb_gt_all = Vec::new();
        for t in 0..t_frames {
            let per = 4 * h * w;
            let of = Tensor::new(vec![4, h, w], stacked.data()[t * per..(t + 1) * per].to_vec())?;
            let cf = Tensor::new(vec![4, h, w], clean.data()[t * per..(t + 1) * per].to_vec())?;
            let so = isp_on_normalized(&of)?;
            let sg = isp_on_normalized(&cf)?;
            ssim_raw += ssim(&of, &cf, 1.0);
            ssim_srgb += ssim(&so, &sg, 1.0);
            srgb_out_all.extend_from_slice(so.data());
            srgb_gt_all.extend_from_slice(sg.data());
        }
        let so = Tensor::new(vec![srgb_out_all.len()], srgb_out_all)?;
        let sg = Tensor::new(vec![srgb_gt_all.len()], srgb_gt_all)?;
        rows.push(EvalRow {
            clip: pair.index,
            psnr_raw: psnr(&stacked, clean, 1.0),
            psnr_srgb: psnr(&so, &sg, 1.0),
            ssim_raw: ssim_raw / t_frames as f64,
            ssim_srgb: ssim_srgb / t_frames as f64,
            baseline_psnr_raw: psnr(&pair.noisy, clean, 1.0),
        });
    }
    let n = rows.len().max(1) as f64;
    Ok(EvalReport {
        mean_psnr_raw: rows.iter().map(|r| r.psnr_raw).sum::<f64>() / n,
        mean_psnr_srgb: rows.iter().map(|r| r.psnr_srgb).sum::<f64>() / n,
        mean_ssim_raw: rows.iter().map(|r| r.ssim_raw).sum::<f64>() / n,
        mean_ssim_srgb: rows.iter().map(|r| r.ssim_srgb).sum::<f64>() / n,
        mean_baseline_psnr_raw: rows.iter().map(|r| r.baseline_psnr_raw).sum::<f64>() / n,
        rows,
    })
}

/// Analytic ISP on a normalized `[4,H,W]` tensor, outside any session.
pub fn isp_on_normalized(t: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut g: rvid_tensor::Graph<f32> = rvid_tensor::Graph::inference();
    let x = g.constant(t.clone());
    let y = toy_isp_graph(&mut g, x)?;
    Ok(g.value(y).clone())
}
