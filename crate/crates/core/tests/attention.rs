//! Spatial attention branches against independent dense oracles, mask
//! behaviour, and the unit/group/block composition contracts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvid_core::attn::spatial::{
    dense_attention_oracle, gwsa, lwsa, mssa_unit, mssag, mssb_forward, nwsa, swsa,
};
use rvid_core::attn::{attn_mask, region_map, AttentionConfig, BlockKind, BlockSettings, BranchToggles};
use rvid_core::params::ParamStore;
use rvid_core::session::Session;
use rvid_tensor::{Tensor, Var};

fn rand_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(vec![rows, cols], |_| rng.random_range(-0.7..0.7))
}

fn rand_map(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(vec![c, h, w], |_| rng.random_range(-1.0..1.0))
}

/// Projection store for one branch prefix.
fn store_for(prefix: &str, c: usize, d: usize, rng: &mut ChaCha8Rng) -> ParamStore<f32> {
    let mut s = ParamStore::new();
    for n in ["p_q", "p_k", "p_v"] {
        s.insert(format!("{prefix}.{n}"), rand_mat(c, d, rng)).unwrap();
    }
    s
}

/// f64 matrix product of token rows with a projection.
fn project(tokens: &[Vec<f64>], w: &Tensor<f32>) -> Vec<Vec<f64>> {
    let (c, d) = (w.shape()[0], w.shape()[1]);
    tokens
        .iter()
        .map(|t| {
            (0..d)
                .map(|j| (0..c).map(|i| t[i] * w.data()[i * d + j] as f64).sum())
                .collect()
        })
        .collect()
}

/// Reference multi-head attention: project, slice heads, dense softmax
/// attention per head, concatenate.
fn multihead_oracle(
    q_tokens: &[Vec<f64>],
    kv_tokens: &[Vec<f64>],
    wq: &Tensor<f32>,
    wk: &Tensor<f32>,
    wv: &Tensor<f32>,
    heads: usize,
) -> Vec<Vec<f64>> {
    let q = project(q_tokens, wq);
    let k = project(kv_tokens, wk);
    let v = project(kv_tokens, wv);
    let d = q[0].len();
    let dh = d / heads;
    let mut out = vec![vec![0.0; d]; q.len()];
    for h in 0..heads {
        let slice = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.iter().map(|r| r[h * dh..(h + 1) * dh].to_vec()).collect()
        };
        let oh = dense_attention_oracle(&slice(&q), &slice(&k), &slice(&v), dh);
        for (i, row) in oh.iter().enumerate() {
            out[i][h * dh..(h + 1) * dh].copy_from_slice(row);
        }
    }
    out
}

/// Token rows of one window of a `[C,H,W]` map, as f64.
fn window_tokens_f64(map: &Tensor<f32>, wy: usize, wx: usize, h: usize, w: usize) -> Vec<Vec<f64>> {
    let (c, _hh, ww) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let mut out = Vec::with_capacity(h * w);
    for iy in 0..h {
        for ix in 0..w {
            out.push(
                (0..c)
                    .map(|ch| map.data()[(ch * map.shape()[1] + wy * h + iy) * ww + wx * w + ix] as f64)
                    .collect(),
            );
        }
    }
    out
}

fn branch_output(sess: &Session<f32>, v: Var, wi: usize, n: usize, d: usize) -> Vec<Vec<f64>> {
    let t = sess.value(v);
    (0..n)
        .map(|tok| (0..d).map(|j| t.data()[(wi * n + tok) * d + j] as f64).collect())
        .collect()
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b.iter())
        .flat_map(|(ra, rb)| ra.iter().zip(rb.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn swsa_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (c, d, heads) = (6, 4, 2);
    let cfg = AttentionConfig::new((2, 2), d, heads, 3, false).unwrap();
    let store = store_for("b", c, d, &mut rng);
    let map = rand_map(c, 4, 4, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, 2, 2).unwrap();
    let out = swsa(&mut sess, "b", tokens, &cfg, None).unwrap();
    for wy in 0..2 {
        for wx in 0..2 {
            let wtok = window_tokens_f64(&map, wy, wx, 2, 2);
            let expect = multihead_oracle(
                &wtok,
                &wtok,
                &store.get("b.p_q").unwrap().value,
                &store.get("b.p_k").unwrap().value,
                &store.get("b.p_v").unwrap().value,
                heads,
            );
            let got = branch_output(&sess, out, wy * 2 + wx, 4, d);
            assert!(max_abs_diff(&expect, &got) < 1e-5);
        }
    }
}

#[test]
fn swsa_constant_keys_average_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (c, d) = (4, 4);
    let cfg = AttentionConfig::new((2, 2), d, 2, 3, false).unwrap();
    let mut store = store_for("b", c, d, &mut rng);
    store.set_value("b.p_k", Tensor::zeros(vec![c, d])).unwrap();
    let map = rand_map(c, 2, 2, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, 2, 2).unwrap();
    let out = swsa(&mut sess, "b", tokens, &cfg, None).unwrap();
    // uniform attention: every output row is the mean of the V rows
    let wtok = window_tokens_f64(&map, 0, 0, 2, 2);
    let v = project(&wtok, &store.get("b.p_v").unwrap().value);
    let mean: Vec<f64> = (0..d).map(|j| v.iter().map(|r| r[j]).sum::<f64>() / 4.0).collect();
    let got = branch_output(&sess, out, 0, 4, d);
    for row in got {
        for (a, b) in row.iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn swsa_single_token_returns_value_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (c, d) = (4, 4);
    let cfg = AttentionConfig::new((1, 1), d, 2, 3, false).unwrap();
    let store = store_for("b", c, d, &mut rng);
    let map = rand_map(c, 1, 1, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, 1, 1).unwrap();
    let out = swsa(&mut sess, "b", tokens, &cfg, None).unwrap();
    let wtok = window_tokens_f64(&map, 0, 0, 1, 1);
    let v = project(&wtok, &store.get("b.p_v").unwrap().value);
    let got = branch_output(&sess, out, 0, 1, d);
    assert!(max_abs_diff(&v, &got) < 1e-6);
}

#[test]
fn lwsa_matches_pool_then_attend_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (c, d, heads) = (6, 4, 2);
    let cfg = AttentionConfig::new((4, 4), 2 * d, 2 * heads, 3, false).unwrap();
    assert_eq!(cfg.d_half, d);
    let store = store_for("b", c, d, &mut rng);
    let map = rand_map(c, 4, 4, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, 4, 4).unwrap();
    let out = lwsa(&mut sess, "b", tokens, &cfg).unwrap();
    // oracle: 2x2-pool the window grid into N/4 key/value tokens
    let wtok = window_tokens_f64(&map, 0, 0, 4, 4);
    let mut pooled = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let cells = [
                &wtok[(2 * i) * 4 + 2 * j],
                &wtok[(2 * i) * 4 + 2 * j + 1],
                &wtok[(2 * i + 1) * 4 + 2 * j],
                &wtok[(2 * i + 1) * 4 + 2 * j + 1],
            ];
            pooled.push((0..c).map(|ch| cells.iter().map(|r| r[ch]).sum::<f64>() / 4.0).collect());
        }
    }
    let expect = multihead_oracle(
        &wtok,
        &pooled,
        &store.get("b.p_q").unwrap().value,
        &store.get("b.p_k").unwrap().value,
        &store.get("b.p_v").unwrap().value,
        cfg.half_heads(),
    );
    let got = branch_output(&sess, out, 0, 16, d);
    assert!(max_abs_diff(&expect, &got) < 1e-5);
}

#[test]
fn lwsa_two_by_two_window_collapses_to_single_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (c, d) = (4, 2);
    let cfg = AttentionConfig::new((2, 2), 2 * d, 2, 3, false).unwrap();
    let store = store_for("b", c, d, &mut rng);
    let map = rand_map(c, 2, 2, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, 2, 2).unwrap();
    let out = lwsa(&mut sess, "b", tokens, &cfg).unwrap();
    // a single pooled token: softmax over one key is 1, output = its V row
    let wtok = window_tokens_f64(&map, 0, 0, 2, 2);
    let pooled: Vec<Vec<f64>> =
        vec![(0..c).map(|ch| wtok.iter().map(|r| r[ch]).sum::<f64>() / 4.0).collect()];
    let v = project(&pooled, &store.get("b.p_v").unwrap().value);
    let got = branch_output(&sess, out, 0, 4, d);
    for row in got {
        for (a, b) in row.iter().zip(v[0].iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn gwsa_matches_pool_oracle_and_degenerates_to_swsa() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (c, d, heads) = (6, 4, 2);
    let cfg = AttentionConfig::new((2, 2), 2 * d, 2 * heads, 3, true).unwrap();
    let store = store_for("b", c, d, &mut rng);
    // random 4x4 map pooled to 2x2 for keys/values
    let map = rand_map(c, 4, 4, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, 2, 2).unwrap();
    let out = gwsa(&mut sess, "b", tokens, &[mv], &cfg, 4).unwrap();
    // oracle global window: 2x2 cells of the whole map averaged
    let mut global = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            global.push(
                (0..c)
                    .map(|ch| {
                        let mut s = 0.0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                s += map.data()[(ch * 4 + 2 * i + dy) * 4 + 2 * j + dx] as f64;
                            }
                        }
                        s / 4.0
                    })
                    .collect::<Vec<f64>>(),
            );
        }
    }
    for wy in 0..2 {
        for wx in 0..2 {
            let wtok = window_tokens_f64(&map, wy, wx, 2, 2);
            let expect = multihead_oracle(
                &wtok,
                &global,
                &store.get("b.p_q").unwrap().value,
                &store.get("b.p_k").unwrap().value,
                &store.get("b.p_v").unwrap().value,
                cfg.half_heads(),
            );
            let got = branch_output(&sess, out, wy * 2 + wx, 4, d);
            assert!(max_abs_diff(&expect, &got) < 1e-5);
        }
    }

    // whole map equal to the window: identical to swsa with these weights
    let small = rand_map(c, 2, 2, &mut rng);
    let mut sess = Session::inference(&store);
    let sv = sess.constant(small.clone());
    let tokens = sess.g.window_tokens(sv, 2, 2).unwrap();
    let g_out = gwsa(&mut sess, "b", tokens, &[sv], &cfg, 1).unwrap();
    let half = AttentionConfig::new((2, 2), d, cfg.half_heads(), 3, false).unwrap();
    let s_out = swsa(&mut sess, "b", tokens, &half, None).unwrap();
    assert!(sess.value(g_out).max_abs_diff(sess.value(s_out)) < 1e-6);
}

#[test]
fn gwsa_constant_map_gives_uniform_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (c, d) = (4, 2);
    let cfg = AttentionConfig::new((2, 2), 2 * d, 2, 3, true).unwrap();
    let store = store_for("b", c, d, &mut rng);
    let map = Tensor::full(vec![c, 4, 4], 0.37f32);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map);
    let tokens = sess.g.window_tokens(mv, 2, 2).unwrap();
    let out = gwsa(&mut sess, "b", tokens, &[mv], &cfg, 4).unwrap();
    let data = sess.value(out);
    let row0: Vec<f32> = data.data()[..d].to_vec();
    for tok in 0..data.shape()[0] * data.shape()[1] {
        for j in 0..d {
            assert!((data.data()[tok * d + j] - row0[j]).abs() < 1e-6);
        }
    }
}

#[test]
fn nwsa_matches_gather_pool_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (c, d) = (5, 4);
    let cfg = AttentionConfig::new((2, 2), 2 * d, 2, 3, false).unwrap();
    let store = store_for("b", c, d, &mut rng);
    let map = rand_map(c, 4, 4, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, 2, 2).unwrap();
    let out = nwsa(&mut sess, "b", tokens, &[mv], &cfg).unwrap();
    // oracle: explicit zero-padded gather of the 6x6 neighbourhood pooled 3x3
    for wy in 0..2i64 {
        for wx in 0..2i64 {
            let mut nb: Vec<Vec<f64>> = Vec::new();
            let (top, left) = (wy * 2 - 2, wx * 2 - 2);
            for iy in 0..2i64 {
                for ix in 0..2i64 {
                    nb.push(
                        (0..c)
                            .map(|ch| {
                                let mut s = 0.0;
                                for r in 0..3i64 {
                                    for t in 0..3i64 {
                                        let sy = top + iy * 3 + r;
                                        let sx = left + ix * 3 + t;
                                        if (0..4).contains(&sy) && (0..4).contains(&sx) {
                                            s += map.data()
                                                [(ch * 4 + sy as usize) * 4 + sx as usize]
                                                as f64;
                                        }
                                    }
                                }
                                s / 9.0
                            })
                            .collect(),
                    );
                }
            }
            let wtok = window_tokens_f64(&map, wy as usize, wx as usize, 2, 2);
            let expect = multihead_oracle(
                &wtok,
                &nb,
                &store.get("b.p_q").unwrap().value,
                &store.get("b.p_k").unwrap().value,
                &store.get("b.p_v").unwrap().value,
                cfg.half_heads(),
            );
            let got = branch_output(&sess, out, (wy * 2 + wx) as usize, 4, d);
            assert!(max_abs_diff(&expect, &got) < 1e-5);
        }
    }
}

#[test]
fn nwsa_factor_one_equals_swsa() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (c, d) = (4, 4);
    let cfg = AttentionConfig::new((2, 2), 2 * d, 4, 1, false).unwrap();
    let store = store_for("b", c, d, &mut rng);
    let map = rand_map(c, 4, 4, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map);
    let tokens = sess.g.window_tokens(mv, 2, 2).unwrap();
    let n_out = nwsa(&mut sess, "b", tokens, &[mv], &cfg).unwrap();
    let plain = AttentionConfig::new((2, 2), d, cfg.half_heads(), 1, false).unwrap();
    let s_out = swsa(&mut sess, "b", tokens, &plain, None).unwrap();
    assert!(sess.value(n_out).max_abs_diff(sess.value(s_out)) < 1e-6);
}

#[test]
fn masked_shifted_attention_never_mixes_regions() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (h, w, sy, sx) = (4usize, 4usize, 2usize, 2usize);
    let (map_h, map_w) = (8usize, 8usize);
    let c = 4usize;
    // map constant per pre-shift region, same value in every channel
    let ids = region_map(map_h, map_w, h, w, sy, sx);
    let region_vals: Vec<f32> = (0..9).map(|i| i as f32 * 0.31 - 1.2).collect();
    let map = Tensor::from_fn(vec![c, map_h, map_w], |idx| {
        let p = idx % (map_h * map_w);
        region_vals[ids[p] as usize]
    });
    // identity value projection exposes raw region values in the output
    let mut store = ParamStore::new();
    store.insert("b.p_q", rand_mat(c, c, &mut rng)).unwrap();
    store.insert("b.p_k", rand_mat(c, c, &mut rng)).unwrap();
    store
        .insert("b.p_v", Tensor::from_fn(vec![c, c], |i| if i / c == i % c { 1.0 } else { 0.0 }))
        .unwrap();
    let cfg = AttentionConfig::new((h, w), c, 2, 3, false).unwrap();
    let mask = attn_mask::<f32>(map_h, map_w, h, w, sy, sx).unwrap();
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let tokens = sess.g.window_tokens(mv, h, w).unwrap();
    let out = swsa(&mut sess, "b", tokens, &cfg, Some(&mask)).unwrap();
    // every output token must equal its own region's value exactly
    let data = sess.value(out);
    let n = h * w;
    for wi in 0..4 {
        let (wy, wx) = (wi / 2, wi % 2);
        for iy in 0..h {
            for ix in 0..w {
                let tok = iy * w + ix;
                let region = ids[(wy * h + iy) * map_w + wx * w + ix] as usize;
                for ch in 0..c {
                    let got = data.data()[(wi * n + tok) * c + ch];
                    assert!(
                        (got - region_vals[region]).abs() < 1e-5,
                        "window {wi} token {tok}: {got} vs region {region}"
                    );
                }
            }
        }
    }
}

#[test]
fn kv_permutation_leaves_attention_invariant() {
    // softmax-weighted sums are order-free over the key/value tokens; use
    // the mutual-attention entry point to permute them explicitly
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (c, d) = (4, 4);
    let cfg = AttentionConfig::new((2, 2), d, 2, 3, false).unwrap();
    let store = store_for("b", c, d, &mut rng);
    let q_map = rand_map(c, 2, 2, &mut rng);
    let kv_map = rand_map(c, 2, 2, &mut rng);
    let mut sess = Session::inference(&store);
    let qv = sess.constant(q_map);
    let kv = sess.constant(kv_map.clone());
    let q_tokens = sess.g.window_tokens(qv, 2, 2).unwrap();
    let kv_tokens = sess.g.window_tokens(kv, 2, 2).unwrap();
    let out = rvid_core::attn::temporal::tma(&mut sess, "b", q_tokens, kv_tokens, &cfg, None).unwrap();
    // permute the kv token order (reverse) and rerun
    let perm = {
        let (ch, hh, ww) = (kv_map.shape()[0], kv_map.shape()[1], kv_map.shape()[2]);
        Tensor::from_fn(vec![ch, hh, ww], |idx| {
            let c0 = idx / (hh * ww);
            let p = idx % (hh * ww);
            let (y, x) = (p / ww, p % ww);
            kv_map.data()[c0 * hh * ww + (hh - 1 - y) * ww + (ww - 1 - x)]
        })
    };
    let kv2 = sess.constant(perm);
    let kv2_tokens = sess.g.window_tokens(kv2, 2, 2).unwrap();
    let out2 = rvid_core::attn::temporal::tma(&mut sess, "b", q_tokens, kv2_tokens, &cfg, None).unwrap();
    assert!(sess.value(out).max_abs_diff(sess.value(out2)) < 1e-6);
}

fn unit_settings(c: usize, d: usize, toggles: BranchToggles) -> BlockSettings {
    BlockSettings {
        kind: BlockKind::Mssb,
        prefix: "blk".into(),
        c,
        attn: AttentionConfig::new((2, 2), d, 2, 3, false).unwrap(),
        d_t: d,
        mlp_hidden: 2 * c,
        dropout: 0.0,
        toggles,
        n_units: 1,
        parity_base: 0,
        pair_base: 0,
    }
}

fn unit_store(s: &BlockSettings, seed: u64) -> ParamStore<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let c = s.c;
    let cfg = &s.attn;
    for u in 0..s.n_units {
        let up = format!("{}.u{u}", s.prefix);
        for ln in ["ln1", "ln2"] {
            store.insert(format!("{up}.{ln}.g"), Tensor::full(vec![c], 1.0)).unwrap();
            store.insert(format!("{up}.{ln}.b"), Tensor::zeros(vec![c])).unwrap();
        }
        let mut width = cfg.d;
        for n in ["p_q", "p_k", "p_v"] {
            store.insert(format!("{up}.attn.swsa.{n}"), rand_mat(c, cfg.d, &mut rng)).unwrap();
        }
        if s.toggles.lwsa {
            for n in ["p_q", "p_k", "p_v"] {
                store.insert(format!("{up}.attn.lwsa.{n}"), rand_mat(c, cfg.d_half, &mut rng)).unwrap();
            }
            width += cfg.d_half;
        }
        if s.toggles.gn_spatial {
            for n in ["p_q", "p_k", "p_v"] {
                store.insert(format!("{up}.attn.nwsa.{n}"), rand_mat(c, cfg.d_half, &mut rng)).unwrap();
            }
            width += cfg.d_half;
        }
        store.insert(format!("{up}.attn.fuse.w"), rand_mat(width, c, &mut rng)).unwrap();
        store.insert(format!("{up}.attn.fuse.b"), Tensor::zeros(vec![c])).unwrap();
        store.insert(format!("{up}.mlp.w1a"), rand_mat(c, 2 * c, &mut rng)).unwrap();
        store.insert(format!("{up}.mlp.b1a"), Tensor::zeros(vec![2 * c])).unwrap();
        store.insert(format!("{up}.mlp.w1b"), rand_mat(c, 2 * c, &mut rng)).unwrap();
        store.insert(format!("{up}.mlp.b1b"), Tensor::zeros(vec![2 * c])).unwrap();
        store.insert(format!("{up}.mlp.w2"), Tensor::zeros(vec![2 * c, c])).unwrap();
        store.insert(format!("{up}.mlp.b2"), Tensor::zeros(vec![c])).unwrap();
    }
    store
        .insert(format!("{}.tail.lin.w", s.prefix), Tensor::from_fn(vec![c, c], |i| if i / c == i % c { 1.0 } else { 0.0 }))
        .unwrap();
    store.insert(format!("{}.tail.lin.b", s.prefix), Tensor::zeros(vec![c])).unwrap();
    store
        .insert(
            format!("{}.tail.conv.w", s.prefix),
            Tensor::from_fn(vec![c, c, 3, 3], |i| {
                let (o, rest) = (i / (c * 9), i % (c * 9));
                let (ci, t) = (rest / 9, rest % 9);
                if o == ci && t == 4 {
                    1.0
                } else {
                    0.0
                }
            }),
        )
        .unwrap();
    store.insert(format!("{}.tail.conv.b", s.prefix), Tensor::zeros(vec![c])).unwrap();
    store
}

/// Fusion weights that select only the plain-branch slice turn the unit's
/// attention stage into the plain branch alone (plus the residual).
#[test]
fn selector_fusion_reduces_unit_to_plain_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = unit_settings(4, 4, BranchToggles::default());
    let mut store = unit_store(&s, 13);
    let width = 4 + 2 + 2;
    let selector = Tensor::from_fn(vec![width, 4], |i| {
        let (row, col) = (i / 4, i % 4);
        if row == col {
            1.0
        } else {
            0.0
        }
    });
    store.set_value("blk.u0.attn.fuse.w", selector).unwrap();
    let map = rand_map(4, 4, 4, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let mut frames = vec![mv];
    mssa_unit(&mut sess, &mut frames, &s, 0, false).unwrap();
    // manual: x + untokens(swsa(window_tokens(ln(x))))
    let mut manual = Session::inference(&store);
    let xv = manual.constant(map);
    let g1 = manual.param("blk.u0.ln1.g").unwrap();
    let b1 = manual.param("blk.u0.ln1.b").unwrap();
    let ln = manual.g.layer_norm_chan(xv, g1, b1).unwrap();
    let tokens = manual.g.window_tokens(ln, 2, 2).unwrap();
    let att = swsa(&mut manual, "blk.u0.attn.swsa", tokens, &s.attn, None).unwrap();
    let back = manual.g.window_untokens(att, 4, 4, 4, 2, 2).unwrap();
    let expect = manual.g.add(xv, back).unwrap();
    // mlp stage is a no-op here (w2 = 0, b2 = 0)
    assert!(sess.value(frames[0]).max_abs_diff(manual.value(expect)) < 1e-5);
}

#[test]
fn zero_fusion_weights_add_constant_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let s = unit_settings(4, 4, BranchToggles::default());
    let mut store = unit_store(&s, 15);
    let width = 4 + 2 + 2;
    store.set_value("blk.u0.attn.fuse.w", Tensor::zeros(vec![width, 4])).unwrap();
    store.set_value("blk.u0.attn.fuse.b", Tensor::full(vec![4], 0.25)).unwrap();
    let map = rand_map(4, 4, 4, &mut rng);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map.clone());
    let mut frames = vec![mv];
    mssa_unit(&mut sess, &mut frames, &s, 0, false).unwrap();
    let out = sess.value(frames[0]);
    for (o, x) in out.data().iter().zip(map.data().iter()) {
        assert!((o - x - 0.25).abs() < 1e-6);
    }
}

#[test]
fn group_of_two_units_is_sequential_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut s = unit_settings(4, 4, BranchToggles::default());
    s.n_units = 2;
    let store = unit_store(&s, 17);
    let map = rand_map(4, 4, 4, &mut rng);
    let mut a = Session::inference(&store);
    let mv = a.constant(map.clone());
    let mut frames = vec![mv];
    mssag(&mut a, &mut frames, &s, false).unwrap();
    let grouped = a.value(frames[0]).clone();
    // manual: unit 0 then unit 1 (unit 1 runs shifted)
    let mut b = Session::inference(&store);
    let mv = b.constant(map);
    let mut frames = vec![mv];
    mssa_unit(&mut b, &mut frames, &s, 0, false).unwrap();
    mssa_unit(&mut b, &mut frames, &s, 1, false).unwrap();
    assert_eq!(&grouped, b.value(frames[0]));
}

#[test]
fn identity_tail_makes_block_group_plus_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let s = unit_settings(4, 4, BranchToggles::default());
    let store = unit_store(&s, 19); // tail is identity lin + center-tap conv
    let map = rand_map(4, 4, 4, &mut rng);
    let mut a = Session::inference(&store);
    let mv = a.constant(map.clone());
    let mut frames = vec![mv];
    mssb_forward(&mut a, &mut frames, &s, false).unwrap();
    let block_out = a.value(frames[0]).clone();
    let mut b = Session::inference(&store);
    let mv = b.constant(map.clone());
    let mut frames = vec![mv];
    mssag(&mut b, &mut frames, &s, false).unwrap();
    let group_out = b.value(frames[0]).clone();
    // block = entry + group output under the identity tail
    for i in 0..block_out.len() {
        let expect = map.data()[i] + group_out.data()[i];
        assert!((block_out.data()[i] - expect).abs() < 1e-5);
    }
}

#[test]
fn zero_input_zero_biases_yield_zero_output() {
    let s = unit_settings(4, 4, BranchToggles::default());
    let store = unit_store(&s, 20);
    let map = Tensor::zeros(vec![4, 4, 4]);
    let mut sess = Session::inference(&store);
    let mv = sess.constant(map);
    let mut frames = vec![mv];
    mssb_forward(&mut sess, &mut frames, &s, false).unwrap();
    assert!(sess.value(frames[0]).data().iter().all(|&v| v.abs() < 1e-6));
}

#[test]
fn branch_concat_width_bookkeeping() {
    let cfg = AttentionConfig::new((2, 2), 4, 2, 3, false).unwrap();
    let full = BranchToggles::default();
    assert_eq!(full.spatial_width(&cfg), 4 + 2 + 2);
    assert_eq!(full.temporal_width(&cfg, 4), 4 + 2 + 4 + 2 + 2);
    let plain = BranchToggles::plain_only();
    assert_eq!(plain.spatial_width(&cfg), 4);
    assert_eq!(plain.temporal_width(&cfg, 4), 8);
}
