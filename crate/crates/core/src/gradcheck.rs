//! Finite-difference verification across the stack, in 64-bit: every
//! primitive op family, every attention branch, and the end-to-end
//! supervised loss on the micro model with sampled parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvid_tensor::check::{finite_diff, max_rel_err, FD_STEP};
use rvid_tensor::{Graph, Tensor, Var};

use crate::attn::{spatial, temporal, AttentionConfig};
use crate::error::Result;
use crate::model::loss::supervised_loss;
use crate::model::plan::{init_params, plan_model};
use crate::model::ModelConfig;
use crate::params::ParamStore;
use crate::session::Session;

#[derive(Clone, Debug)]
pub struct GradCheckRow {
    pub name: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

pub const GRADCHECK_TOL: f64 = 1e-3;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// FD check of one op under a fixed random output projection.
fn check_op(
    name: &str,
    inputs: &[Tensor<f64>],
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Var,
) -> GradCheckRow {
    let run = |xs: &[Tensor<f64>]| -> (Graph<f64>, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars);
        (g, vars, out)
    };
    let (mut g0, vars0, out0) = run(inputs);
    let mut prng = ChaCha8Rng::seed_from_u64(4242);
    let proj = rand_tensor(g0.value(out0).shape(), &mut prng);
    let pv = g0.constant(proj.clone());
    let prod = g0.mul(out0, pv).unwrap();
    let loss = g0.sum_all(prod).unwrap();
    let grads = g0.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (i, x0) in inputs.iter().enumerate() {
        let scalar_f = |x: &Tensor<f64>| -> f64 {
            let mut xs = inputs.to_vec();
            xs[i] = x.clone();
            let (mut g, _, out) = run(&xs);
            let pv = g.constant(proj.clone());
            let prod = g.mul(out, pv).unwrap();
            let loss = g.sum_all(prod).unwrap();
            g.value(loss).item()
        };
        let numeric = finite_diff(scalar_f, x0, FD_STEP);
        let analytic = grads
            .get(vars0[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(x0.shape().to_vec()));
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    GradCheckRow { name: name.to_string(), max_rel_err: worst, pass: worst <= GRADCHECK_TOL }
}

/// Tiny parameter store for one attention branch.
fn branch_store(c: usize, d: usize, prefix: &str, rng: &mut ChaCha8Rng) -> ParamStore<f64> {
    let mut store = ParamStore::new();
    for n in ["p_q", "p_k", "p_v"] {
        store
            .insert(format!("{prefix}.{n}"), rand_tensor(&[c, d], rng).map(|v| v * 0.5))
            .unwrap();
    }
    store
}

fn check_branch(
    name: &str,
    c: usize,
    d: usize,
    f: impl Fn(&mut Session<f64>, Var, &[Var], &AttentionConfig) -> Var,
) -> GradCheckRow {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = AttentionConfig::new((2, 2), d, 2, 3, false).unwrap();
    let store = branch_store(c, d, "br", &mut rng);
    let map = rand_tensor(&[c, 4, 4], &mut rng);
    // differentiate w.r.t. the input map through windowing and the branch
    let run = |x: &Tensor<f64>| -> (Session<'_, f64>, Var, Var) {
        let mut sess = Session::new(&store);
        let xv = sess.g.leaf(x.clone());
        let tokens = sess.g.window_tokens(xv, 2, 2).unwrap();
        let out = f(&mut sess, tokens, &[xv], &cfg);
        (sess, xv, out)
    };
    let (mut s0, xv0, out0) = run(&map);
    let mut prng = ChaCha8Rng::seed_from_u64(4243);
    let proj = rand_tensor(s0.g.value(out0).shape(), &mut prng);
    let pv = s0.g.constant(proj.clone());
    let prod = s0.g.mul(out0, pv).unwrap();
    let loss = s0.g.sum_all(prod).unwrap();
    let grads = s0.g.backward(loss).unwrap();
    let analytic = grads
        .get(xv0)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(map.shape().to_vec()));
    let numeric = finite_diff(
        |x| {
            let (mut s, _, out) = run(x);
            let pv = s.g.constant(proj.clone());
            let prod = s.g.mul(out, pv).unwrap();
            let loss = s.g.sum_all(prod).unwrap();
            s.g.value(loss).item()
        },
        &map,
        FD_STEP,
    );
    let err = max_rel_err(&analytic, &numeric);
    GradCheckRow { name: name.to_string(), max_rel_err: err, pass: err <= GRADCHECK_TOL }
}

/// Micro model used by the end-to-end check: small windows and maps keep
/// the finite differences fast.
pub fn gradcheck_model_config() -> ModelConfig {
    let mut cfg = ModelConfig::micro();
    cfg.window = (4, 4);
    cfg
}

/// End-to-end check: supervised loss on the micro config, sampled
/// parameter coordinates perturbed one at a time.
pub fn check_end_to_end(seed: u64, coords_per_param: usize) -> Result<GradCheckRow> {
    let cfg = gradcheck_model_config();
    let plan = plan_model(&cfg)?;
    let store64 = init_params(&plan, seed)?.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let noisy = Tensor::from_fn(vec![2, 4, 16, 16], |_| rng.random_range(0.05..0.95));
    let clean = Tensor::from_fn(vec![2, 4, 16, 16], |_| rng.random_range(0.05..0.95));

    let loss_value = |store: &ParamStore<f64>| -> Result<f64> {
        let mut sess = Session::new(store);
        let loss = supervised_loss(&mut sess, &plan, &noisy, &clean, 0.5, false)?;
        Ok(sess.value(loss).item())
    };
    let mut sess = Session::new(&store64);
    let loss = supervised_loss(&mut sess, &plan, &noisy, &clean, 0.5, false)?;
    let grads = sess.grads(loss)?;

    let mut worst = 0.0f64;
    let names: Vec<String> = store64.names().map(|s| s.to_string()).collect();
    for name in names {
        let len = store64.get(&name)?.value.len();
        let analytic = grads.get(&name).expect("all params tracked");
        for _ in 0..coords_per_param {
            let i = rng.random_range(0..len);
            let mut plus = store64.clone();
            let mut minus = store64.clone();
            let base = store64.get(&name)?.value.clone();
            let mut bp = base.clone();
            bp.update_in_place(|j, v| if j == i { v + FD_STEP } else { v });
            plus.set_value(&name, bp)?;
            let mut bm = base.clone();
            bm.update_in_place(|j, v| if j == i { v - FD_STEP } else { v });
            minus.set_value(&name, bm)?;
            let numeric = (loss_value(&plus)? - loss_value(&minus)?) / (2.0 * FD_STEP);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max(err);
        }
    }
    Ok(GradCheckRow {
        name: "end_to_end_supervised_micro".into(),
        max_rel_err: worst,
        pass: worst <= GRADCHECK_TOL,
    })
}

/// The full per-operation report.
pub fn gradcheck_all(seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    let a = rand_tensor(&[3, 4], &mut rng);
    let b = rand_tensor(&[4, 2], &mut rng);
    rows.push(check_op("matmul", &[a, b], |g, v| g.matmul(v[0], v[1]).unwrap()));

    let x = rand_tensor(&[2, 6, 6], &mut rng);
    let w1 = rand_tensor(&[3, 2, 1, 1], &mut rng);
    let w3 = rand_tensor(&[3, 2, 3, 3], &mut rng);
    let bias = rand_tensor(&[3], &mut rng);
    rows.push(check_op("conv2d_k1", &[x.clone(), w1, bias.clone()], |g, v| {
        g.conv2d(v[0], v[1], v[2]).unwrap()
    }));
    rows.push(check_op("conv2d_k3", &[x.clone(), w3, bias], |g, v| {
        g.conv2d(v[0], v[1], v[2]).unwrap()
    }));

    let sm = rand_tensor(&[2, 4, 5], &mut rng);
    rows.push(check_op("softmax_rows", &[sm], |g, v| g.softmax_masked(v[0], None, 1).unwrap()));

    let ln = rand_tensor(&[4, 3, 3], &mut rng);
    let gamma = Tensor::from_fn(vec![4], |_| rng.random_range(0.5..1.5));
    let beta = rand_tensor(&[4], &mut rng);
    rows.push(check_op("layer_norm", &[ln, gamma, beta], |g, v| {
        g.layer_norm_chan(v[0], v[1], v[2]).unwrap()
    }));

    let ge = rand_tensor(&[4, 4], &mut rng);
    rows.push(check_op("gelu", &[ge], |g, v| g.gelu(v[0]).unwrap()));

    rows.push(check_op("adaptive_avg_downsample", &[x.clone()], |g, v| {
        g.adaptive_avg_pool(v[0], 3, 2).unwrap()
    }));
    rows.push(check_op("avg_pool2", &[x.clone()], |g, v| g.avg_pool2(v[0]).unwrap()));
    rows.push(check_op("upsample_nearest2", &[x.clone()], |g, v| g.upsample_nearest2(v[0]).unwrap()));
    rows.push(check_op("cyclic_shift", &[x.clone()], |g, v| g.cyclic_shift(v[0], 1, 2).unwrap()));
    rows.push(check_op("window_partition_merge", &[x.clone()], |g, v| {
        let t = g.window_tokens(v[0], 2, 2).unwrap();
        g.window_untokens(t, 2, 6, 6, 2, 2).unwrap()
    }));
    rows.push(check_op("neighbor_gather_pool", &[x], |g, v| {
        g.neighbor_pool_tokens(v[0], 2, 2, 3).unwrap()
    }));

    let e1 = rand_tensor(&[3, 4], &mut rng);
    let e2 = rand_tensor(&[3, 4], &mut rng);
    rows.push(check_op("add_scale_mul", &[e1, e2], |g, v| {
        let s = g.add(v[0], v[1]).unwrap();
        let m = g.mul(s, v[1]).unwrap();
        g.scale(m, 0.7).unwrap()
    }));

    let isp = Tensor::from_fn(vec![4, 4, 4], |_| rng.random_range(0.05..0.95));
    rows.push(check_op("toy_isp", &[isp], |g, v| crate::raw::toy_isp_graph(g, v[0]).unwrap()));

    // attention branches against the input map
    rows.push(check_branch("swsa", 4, 4, |s, tokens, _, cfg| {
        spatial::swsa(s, "br", tokens, cfg, None).unwrap()
    }));
    rows.push(check_branch("lwsa", 4, 2, |s, tokens, _, cfg| {
        let half = AttentionConfig::new(cfg.window, 4, 2, 3, false).unwrap();
        spatial::lwsa(s, "br", tokens, &half).unwrap()
    }));
    rows.push(check_branch("gwsa", 4, 2, |s, tokens, maps, cfg| {
        let half = AttentionConfig::new(cfg.window, 4, 2, 3, true).unwrap();
        spatial::gwsa(s, "br", tokens, maps, &half, 4).unwrap()
    }));
    rows.push(check_branch("nwsa", 4, 2, |s, tokens, maps, cfg| {
        let half = AttentionConfig::new(cfg.window, 4, 2, 3, false).unwrap();
        spatial::nwsa(s, "br", tokens, maps, &half).unwrap()
    }));
    rows.push(check_branch("tma", 4, 4, |s, tokens, _, cfg| {
        temporal::tma(s, "br", tokens, tokens, cfg, None).unwrap()
    }));
    rows.push(check_branch("gtma", 4, 2, |s, tokens, maps, cfg| {
        let half = AttentionConfig::new(cfg.window, 4, 2, 3, true).unwrap();
        temporal::gtma(s, "br", tokens, maps, &half, 4).unwrap()
    }));
    rows.push(check_branch("ntma", 4, 2, |s, tokens, maps, cfg| {
        let half = AttentionConfig::new(cfg.window, 4, 2, 3, false).unwrap();
        temporal::ntma(s, "br", tokens, maps, &half).unwrap()
    }));

    rows.push(check_end_to_end(seed, 2)?);
    Ok(rows)
}

/// One pass/fail line per row, for the CLI.
pub fn format_report(rows: &[GradCheckRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!(
            "{:<32} max_rel_err {:>10.3e}  {}\n",
            r.name,
            r.max_rel_err,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}
