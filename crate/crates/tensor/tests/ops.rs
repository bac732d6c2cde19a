//! Forward semantics of the tensor ops against independent oracles.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvid_tensor::{Graph, Tensor, Var};

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn eval(f: impl Fn(&mut Graph<f64>) -> Var) -> Tensor<f64> {
    let mut g = Graph::new();
    let v = f(&mut g);
    g.value(v).clone()
}

#[test]
fn matmul_identity_and_projector() {
    let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let out = eval(|g| {
        let i = g.constant(eye.clone());
        let a = g.constant(a.clone());
        g.matmul(i, a).unwrap()
    });
    assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);

    let proj = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let b = Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
    let out = eval(|g| {
        let p = g.constant(proj.clone());
        let b = g.constant(b.clone());
        g.matmul(p, b).unwrap()
    });
    assert_eq!(out.data(), &[5.0, 6.0, 0.0, 0.0]);
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_tensor(&[3, 4], &mut rng);
    let b = rand_tensor(&[4, 2], &mut rng);
    let out = eval(|g| {
        let av = g.constant(a.clone());
        let bv = g.constant(b.clone());
        g.matmul(av, bv).unwrap()
    });
    // naive sum-of-products oracle
    let mut expect = vec![0.0; 6];
    for i in 0..3 {
        for j in 0..2 {
            for k in 0..4 {
                expect[i * 2 + j] += a.data()[i * 4 + k] * b.data()[k * 2 + j];
            }
        }
    }
    for (o, e) in out.data().iter().zip(expect.iter()) {
        assert!((o - e).abs() < 1e-12);
    }
}

#[test]
fn matmul_shape_mismatch_errors() {
    let mut g: Graph<f64> = Graph::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 3]));
    assert!(g.matmul(a, b).is_err());
}

#[test]
fn softmax_uniform_row() {
    let out = eval(|g| {
        let x = g.constant(Tensor::new(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap());
        g.softmax_rows(x).unwrap()
    });
    for v in out.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_two_element_closed_form() {
    for c in [-5.0, 0.0, 3.25, 1e3] {
        let out = eval(|g| {
            let x = g.constant(Tensor::new(vec![1, 2], vec![c, c + (2.0f64).ln()]).unwrap());
            g.softmax_rows(x).unwrap()
        });
        assert!((out.data()[0] - 1.0 / 3.0).abs() < 1e-9, "c={c}");
        assert!((out.data()[1] - 2.0 / 3.0).abs() < 1e-9, "c={c}");
    }
}

#[test]
fn softmax_saturation_no_overflow() {
    let out = eval(|g| {
        let x = g.constant(Tensor::new(vec![1, 2], vec![-1e4, 0.0]).unwrap());
        g.softmax_rows(x).unwrap()
    });
    assert!(out.all_finite());
    assert!(out.data()[0] < 1e-300);
    assert!((out.data()[1] - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        vals in proptest::collection::vec(-30.0f64..30.0, 12),
        shift in -10.0f64..10.0,
    ) {
        let x = Tensor::new(vec![3, 4], vals.clone()).unwrap();
        let y = eval(|g| { let v = g.constant(x.clone()); g.softmax_rows(v).unwrap() });
        for r in 0..3 {
            let s: f64 = y.data()[r * 4..(r + 1) * 4].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
        let xs = Tensor::new(vec![3, 4], vals.iter().map(|v| v + shift).collect()).unwrap();
        let ys = eval(|g| { let v = g.constant(xs.clone()); g.softmax_rows(v).unwrap() });
        prop_assert!(y.max_abs_diff(&ys) < 1e-6);
    }

    #[test]
    fn reshape_and_permute_round_trip_exact(
        vals in proptest::collection::vec(-100.0f64..100.0, 24),
    ) {
        let x = Tensor::new(vec![2, 3, 4], vals).unwrap();
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let r = g.reshape(v, vec![4, 6]).unwrap();
        let back = g.reshape(r, vec![2, 3, 4]).unwrap();
        prop_assert!(g.value(back) == &x);
        let p = g.permute(v, &[2, 0, 1]).unwrap();
        let q = g.permute(p, &[1, 2, 0]).unwrap();
        prop_assert!(g.value(q) == &x);
    }
}

#[test]
fn conv2d_one_by_one_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&[2, 4, 4], &mut rng);
    // 1x1 kernel = identity over channels
    let w = Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let b = Tensor::zeros(vec![2]);
    let out = eval(|g| {
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let bv = g.constant(b.clone());
        g.conv2d(xv, wv, bv).unwrap()
    });
    assert_eq!(out.data(), x.data());
}

#[test]
fn conv2d_zero_kernel_gives_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&[3, 5, 5], &mut rng);
    let w = Tensor::zeros(vec![2, 3, 3, 3]);
    let b = Tensor::new(vec![2], vec![0.5, -1.25]).unwrap();
    let out = eval(|g| {
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let bv = g.constant(b.clone());
        g.conv2d(xv, wv, bv).unwrap()
    });
    for (i, v) in out.data().iter().enumerate() {
        let expect = if i < 25 { 0.5 } else { -1.25 };
        assert_eq!(*v, expect);
    }
}

#[test]
fn conv2d_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&[2, 5, 5], &mut rng);
    let w = rand_tensor(&[3, 2, 3, 3], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    let out = eval(|g| {
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let bv = g.constant(b.clone());
        g.conv2d(xv, wv, bv).unwrap()
    });
    // direct zero-padded cross-correlation
    let (h, wd, k, pad) = (5i64, 5i64, 3i64, 1i64);
    for o in 0..3i64 {
        for i in 0..h {
            for j in 0..wd {
                let mut acc = b.data()[o as usize];
                for c in 0..2i64 {
                    for ky in 0..k {
                        for kx in 0..k {
                            let (si, sj) = (i + ky - pad, j + kx - pad);
                            if si < 0 || si >= h || sj < 0 || sj >= wd {
                                continue;
                            }
                            acc += w.data()[(((o * 2 + c) * k + ky) * k + kx) as usize]
                                * x.data()[((c * h + si) * wd + sj) as usize];
                        }
                    }
                }
                let got = out.data()[((o * h + i) * wd + j) as usize];
                assert!((got - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv2d_rejects_even_kernel() {
    let mut g: Graph<f64> = Graph::new();
    let x = g.constant(Tensor::zeros(vec![1, 4, 4]));
    let w = g.constant(Tensor::zeros(vec![1, 1, 2, 2]));
    let b = g.constant(Tensor::zeros(vec![1]));
    assert!(g.conv2d(x, w, b).is_err());
}

#[test]
fn adaptive_pool_constant_and_ramp() {
    let c = Tensor::full(vec![1, 4, 6], 2.5);
    let out = eval(|g| {
        let v = g.constant(c.clone());
        g.adaptive_avg_pool(v, 2, 3).unwrap()
    });
    for v in out.data() {
        assert_eq!(*v, 2.5);
    }

    // 4x4 ramp 0..15 pooled 2x2 -> means of the quadrants
    let ramp = Tensor::from_fn(vec![1, 4, 4], |i| i as f64);
    let out = eval(|g| {
        let v = g.constant(ramp.clone());
        g.adaptive_avg_pool(v, 2, 2).unwrap()
    });
    assert_eq!(out.data(), &[2.5, 4.5, 10.5, 12.5]);
}

#[test]
fn adaptive_pool_full_size_is_identity_and_preserves_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&[2, 6, 4], &mut rng);
    let out = eval(|g| {
        let v = g.constant(x.clone());
        g.adaptive_avg_pool(v, 6, 4).unwrap()
    });
    assert_eq!(out.data(), x.data());

    let pooled = eval(|g| {
        let v = g.constant(x.clone());
        g.adaptive_avg_pool(v, 3, 2).unwrap()
    });
    let mean_in: f64 = x.data().iter().sum::<f64>() / x.len() as f64;
    let mean_out: f64 = pooled.data().iter().sum::<f64>() / pooled.len() as f64;
    assert!((mean_in - mean_out).abs() < 1e-12);
}

#[test]
fn adaptive_pool_zero_extent_errors() {
    let mut g: Graph<f64> = Graph::new();
    let v = g.constant(Tensor::zeros(vec![1, 4, 4]));
    assert!(g.adaptive_avg_pool(v, 0, 2).is_err());
}

#[test]
fn layer_norm_constant_vector_is_zero_pre_affine() {
    let x = Tensor::full(vec![5, 1, 1], 3.7);
    let out = eval(|g| {
        let v = g.constant(x.clone());
        let gamma = g.constant(Tensor::full(vec![5], 1.0));
        let beta = g.constant(Tensor::zeros(vec![5]));
        g.layer_norm_chan(v, gamma, beta).unwrap()
    });
    for v in out.data() {
        assert!(v.abs() < 1e-9);
    }
}

#[test]
fn gelu_at_zero() {
    let out = eval(|g| {
        let v = g.constant(Tensor::scalar(0.0));
        g.gelu(v).unwrap()
    });
    assert_eq!(out.item(), 0.0);
}

#[test]
fn dropout_identity_in_inference() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&[3, 3], &mut rng);
    let mut g = Graph::new();
    // training flag left off => identity even with p > 0
    let v = g.constant(x.clone());
    let out = g.dropout(v, 0.5).unwrap();
    assert_eq!(g.value(out), &x);
}

#[test]
fn window_tokens_round_trip_and_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = rand_tensor(&[3, 4, 4], &mut rng);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let t = g.window_tokens(v, 2, 2).unwrap();
    assert_eq!(g.value(t).shape(), &[4, 4, 3]);
    // window 0 token 0 is pixel (0,0); window 1 token 0 is pixel (0,2)
    assert_eq!(g.value(t).data()[0], x.data()[0]);
    let w1t0 = &g.value(t).data()[(4 + 0) * 3..(4 + 0) * 3 + 3];
    assert_eq!(w1t0[0], x.data()[2]);
    let back = g.window_untokens(t, 3, 4, 4, 2, 2).unwrap();
    assert_eq!(g.value(back), &x);
}

#[test]
fn window_tokens_rejects_indivisible() {
    let mut g: Graph<f64> = Graph::new();
    let v = g.constant(Tensor::zeros(vec![1, 5, 4]));
    assert!(g.window_tokens(v, 2, 2).is_err());
}

#[test]
fn cyclic_shift_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&[2, 6, 8], &mut rng);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let s = g.cyclic_shift(v, 3, -2).unwrap();
    let b = g.cyclic_shift(s, -3, 2).unwrap();
    assert_eq!(g.value(b), &x);
    // zero shift is the identity
    let z = g.cyclic_shift(v, 0, 0).unwrap();
    assert_eq!(g.value(z), &x);
}

#[test]
fn neighbor_pool_factor_one_equals_window_tokens() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = rand_tensor(&[2, 4, 4], &mut rng);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let a = g.neighbor_pool_tokens(v, 2, 2, 1).unwrap();
    let b = g.window_tokens(v, 2, 2).unwrap();
    assert!(g.value(a).max_abs_diff(g.value(b)) < 1e-15);
}

#[test]
fn neighbor_pool_corner_coverage() {
    // constant map, f=3: the corner window's pooled cells average
    // c * (in-bounds fraction) because padding contributes zeros
    let c = 2.0f64;
    let x = Tensor::full(vec![1, 4, 4], c);
    let mut g = Graph::new();
    let v = g.constant(x);
    let t = g.neighbor_pool_tokens(v, 2, 2, 3).unwrap();
    // window 0, token 0 pools rows -2..1, cols -2..1 => only (0,0) in bounds
    let got = g.value(t).data()[0];
    assert!((got - c * (1.0 / 9.0)).abs() < 1e-12);
    // window 0, token 3 pools rows 1..4? no: token (1,1) covers rows 1..4 x cols 1..4, fully in bounds
    let got = g.value(t).data()[3];
    assert!((got - c).abs() < 1e-12);
}

#[test]
fn upsample_then_pool_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = rand_tensor(&[2, 3, 5], &mut rng);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let up = g.upsample_nearest2(v).unwrap();
    let down = g.avg_pool2(up).unwrap();
    assert!(g.value(down).max_abs_diff(&x) < 1e-12);
}

#[test]
fn backward_linear_map_gradient() {
    // loss = sum(W x) => dL/dW = x broadcast per row
    let x = Tensor::new(vec![3, 1], vec![1.0, -2.0, 0.5]).unwrap();
    let w0 = Tensor::zeros(vec![2, 3]);
    let mut g = Graph::new();
    let w = g.leaf(w0);
    let xv = g.constant(x.clone());
    let y = g.matmul(w, xv).unwrap();
    let loss = g.sum_all(y).unwrap();
    let grads = g.backward(loss).unwrap();
    let dw = grads.get(w).unwrap();
    assert_eq!(dw.shape(), &[2, 3]);
    for r in 0..2 {
        for c in 0..3 {
            assert_eq!(dw.data()[r * 3 + c], x.data()[c]);
        }
    }
}

#[test]
fn backward_unused_parameter_has_no_gradient() {
    let mut g: Graph<f64> = Graph::new();
    let used = g.leaf(Tensor::scalar(2.0));
    let unused = g.leaf(Tensor::scalar(5.0));
    let loss = g.mul(used, used).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(used).is_some());
    assert!(grads.get(unused).is_none());
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g: Graph<f64> = Graph::new();
    let x = g.leaf(Tensor::zeros(vec![2, 2]));
    assert!(g.backward(x).is_err());
}

#[test]
fn backward_rejects_non_finite_loss() {
    let mut g: Graph<f64> = Graph::new();
    let x = g.leaf(Tensor::scalar(f64::INFINITY));
    assert!(g.backward(x).is_err());
}

#[test]
fn inference_graph_refuses_backward() {
    let mut g: Graph<f64> = Graph::inference();
    let x = g.leaf(Tensor::scalar(1.0));
    assert!(g.backward(x).is_err());
}

#[test]
fn broadcast_windows_layout() {
    // frames=2, heads=2, nW=3: entry (t,h) lands at (t*3+w)*2+h
    let x = Tensor::from_fn(vec![4, 1, 1], |i| i as f64);
    let mut g = Graph::new();
    let v = g.constant(x);
    let out = g.broadcast_windows(v, 3, 2).unwrap();
    assert_eq!(out_shape(&g, out), vec![12, 1, 1]);
    let d = g.value(out).data().to_vec();
    for t in 0..2 {
        for w in 0..3 {
            for h in 0..2 {
                assert_eq!(d[(t * 3 + w) * 2 + h], (t * 2 + h) as f64);
            }
        }
    }
}

fn out_shape(g: &Graph<f64>, v: Var) -> Vec<usize> {
    g.value(v).shape().to_vec()
}
