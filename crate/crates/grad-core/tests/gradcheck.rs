//! Randomized finite-difference checks for every differentiable op.
//!
//! Each case compares analytic gradients against central differences through
//! a randomly weighted scalar readout of the op output, so element ordering
//! bugs (transposes, strides) show up as gradient mismatches.

use grad_core::graph::{Graph, Var};
use grad_core::losses;
use grad_core::{grad_check, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const CASES: usize = 100;
const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn rand_tensor(r: &mut ChaCha12Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| r.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Weighted readout: sum(w * x) with fixed random weights, so every output
/// element contributes with a distinct coefficient.
fn readout(g: &mut Graph, x: Var, weights: &[f64]) -> Var {
    let shape = g.shape(x).to_vec();
    let w = g.constant_from(shape, weights.to_vec()).unwrap();
    let prod = g.mul(x, w).unwrap();
    g.sum_all(prod)
}

fn rand_weights(r: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

#[test]
fn add_sub_mul_elementwise() {
    let mut r = rng(11);
    for case in 0..CASES {
        let a = rand_tensor(&mut r, vec![3, 4], -2.0, 2.0);
        let b = rand_tensor(&mut r, vec![3, 4], -2.0, 2.0);
        let w = rand_weights(&mut r, 12);
        for op in 0..3 {
            let worst = grad_check(&[a.clone(), b.clone()], EPS, &mut |g, v| {
                let out = match op {
                    0 => g.add(v[0], v[1]).unwrap(),
                    1 => g.sub(v[0], v[1]).unwrap(),
                    _ => g.mul(v[0], v[1]).unwrap(),
                };
                readout(g, out, &w)
            });
            assert!(worst < TOL, "case {case} op {op}: {worst}");
        }
    }
}

#[test]
fn broadcast_binary_ops() {
    let mut r = rng(12);
    for case in 0..CASES {
        let a = rand_tensor(&mut r, vec![2, 3, 4], -2.0, 2.0);
        let b = rand_tensor(&mut r, vec![4], -2.0, 2.0);
        let w = rand_weights(&mut r, 24);
        let worst = grad_check(&[a, b], EPS, &mut |g, v| {
            let s = g.mul(v[0], v[1]).unwrap();
            let t = g.add(s, v[1]).unwrap();
            readout(g, t, &w)
        });
        assert!(worst < TOL, "case {case}: {worst}");
    }
}

#[test]
fn scale_and_unary_smooth() {
    let mut r = rng(13);
    for case in 0..CASES {
        let x = rand_tensor(&mut r, vec![2, 5], -2.0, 2.0);
        let c = r.gen_range(-3.0..3.0);
        let w = rand_weights(&mut r, 10);
        for op in 0..5 {
            let worst = grad_check(&[x.clone()], EPS, &mut |g, v| {
                let out = match op {
                    0 => g.scale(v[0], c),
                    1 => g.gelu(v[0]),
                    2 => g.sigmoid(v[0]),
                    3 => g.tanh(v[0]),
                    _ => g.exp(v[0]),
                };
                readout(g, out, &w)
            });
            assert!(worst < TOL, "case {case} op {op}: {worst}");
        }
    }
}

#[test]
fn relu_away_from_kink() {
    let mut r = rng(14);
    for case in 0..CASES {
        let data: Vec<f64> = (0..10)
            .map(|_| {
                let v: f64 = r.gen_range(0.1..2.0);
                if r.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let x = Tensor::from_vec(vec![10], data).unwrap();
        let w = rand_weights(&mut r, 10);
        let worst = grad_check(&[x], EPS, &mut |g, v| {
            let out = g.relu(v[0]);
            readout(g, out, &w)
        });
        assert!(worst < TOL, "case {case}: {worst}");
    }
}

#[test]
fn clamp_away_from_bounds() {
    let mut r = rng(15);
    for case in 0..CASES {
        // Values well inside or well outside [-1, 1], never near the edges.
        let data: Vec<f64> = (0..10)
            .map(|_| {
                let inside = r.gen_bool(0.5);
                let mag: f64 =
                    if inside { r.gen_range(0.0..0.8) } else { r.gen_range(1.2..3.0) };
                if r.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let x = Tensor::from_vec(vec![10], data).unwrap();
        let w = rand_weights(&mut r, 10);
        let worst = grad_check(&[x], EPS, &mut |g, v| {
            let out = g.clamp(v[0], -1.0, 1.0);
            readout(g, out, &w)
        });
        assert!(worst < TOL, "case {case}: {worst}");
    }
}

#[test]
fn min2_away_from_ties() {
    let mut r = rng(16);
    for case in 0..CASES {
        let a = rand_tensor(&mut r, vec![8], -2.0, 2.0);
        let mut b = rand_tensor(&mut r, vec![8], -2.0, 2.0);
        for i in 0..8 {
            // Keep the pair separated so the min choice is stable under eps.
            if (a.data()[i] - b.data()[i]).abs() < 0.05 {
                b.data_mut()[i] += 0.2;
            }
        }
        let w = rand_weights(&mut r, 8);
        let worst = grad_check(&[a, b], EPS, &mut |g, v| {
            let out = g.min2(v[0], v[1]).unwrap();
            readout(g, out, &w)
        });
        assert!(worst < TOL, "case {case}: {worst}");
    }
}

#[test]
fn matmul_batched_and_shared() {
    let mut r = rng(17);
    for case in 0..CASES {
        let a = rand_tensor(&mut r, vec![2, 3, 4], -1.0, 1.0);
        let b = rand_tensor(&mut r, vec![2, 4, 5], -1.0, 1.0);
        let shared = rand_tensor(&mut r, vec![4, 5], -1.0, 1.0);
        let w = rand_weights(&mut r, 30);
        let worst = grad_check(&[a.clone(), b, shared.clone()], EPS, &mut |g, v| {
            let batched = g.matmul(v[0], v[1]).unwrap();
            let with_shared = g.matmul(v[0], v[2]).unwrap();
            let sum = g.add(batched, with_shared).unwrap();
            readout(g, sum, &w)
        });
        assert!(worst < TOL, "case {case}: {worst}");

        // Rank-2 left operand against a batched right operand.
        let left = rand_tensor(&mut r, vec![3, 4], -1.0, 1.0);
        let right = rand_tensor(&mut r, vec![2, 4, 5], -1.0, 1.0);
        let w2 = rand_weights(&mut r, 30);
        let worst2 = grad_check(&[left, right], EPS, &mut |g, v| {
            let out = g.matmul(v[0], v[1]).unwrap();
            readout(g, out, &w2)
        });
        assert!(worst2 < TOL, "case {case} shared-left: {worst2}");
    }
}

#[test]
fn transpose_and_axis_swap() {
    let mut r = rng(18);
    for case in 0..CASES {
        let x = rand_tensor(&mut r, vec![2, 3, 4], -2.0, 2.0);
        let w = rand_weights(&mut r, 24);
        let worst = grad_check(&[x], EPS, &mut |g, v| {
            let t = g.transpose_last2(v[0]).unwrap();
            readout(g, t, &w)
        });
        assert!(worst < TOL, "case {case} transpose: {worst}");

        let y = rand_tensor(&mut r, vec![2, 3, 4, 2], -2.0, 2.0);
        let w2 = rand_weights(&mut r, 48);
        let worst2 = grad_check(&[y], EPS, &mut |g, v| {
            let s = g.swap_axes_1_2(v[0]).unwrap();
            readout(g, s, &w2)
        });
        assert!(worst2 < TOL, "case {case} swap: {worst2}");
    }
}

#[test]
fn softmax_masked_rows() {
    let mut r = rng(19);
    for case in 0..CASES {
        let x = rand_tensor(&mut r, vec![3, 5], -2.0, 2.0);
        let mut mask = vec![true; 5];
        // Mask one or two positions, never all.
        mask[r.gen_range(0..5)] = false;
        if r.gen_bool(0.5) {
            mask[r.gen_range(0..5)] = false;
        }
        if mask.iter().all(|m| !m) {
            mask[0] = true;
        }
        let mask_c = mask.clone();
        let w = rand_weights(&mut r, 15);
        let worst = grad_check(&[x], EPS, &mut |g, v| {
            let p = g.softmax_masked(v[0], &mask_c, &[5]).unwrap();
            readout(g, p, &w)
        });
        assert!(worst < TOL, "case {case}: {worst}");
    }
}

#[test]
fn layer_norm_full() {
    let mut r = rng(20);
    for case in 0..CASES {
        let x = rand_tensor(&mut r, vec![3, 6], -2.0, 2.0);
        let gain = rand_tensor(&mut r, vec![6], 0.5, 1.5);
        let bias = rand_tensor(&mut r, vec![6], -0.5, 0.5);
        let w = rand_weights(&mut r, 18);
        let worst = grad_check(&[x, gain, bias], EPS, &mut |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2]).unwrap();
            readout(g, y, &w)
        });
        assert!(worst < TOL, "case {case}: {worst}");
    }
}

#[test]
fn reductions() {
    let mut r = rng(21);
    for case in 0..CASES {
        let x = rand_tensor(&mut r, vec![2, 3, 4], -2.0, 2.0);
        for axis in 0..3 {
            let n_out = 24 / g_axis_len(axis);
            let w = rand_weights(&mut r, n_out);
            let worst = grad_check(&[x.clone()], EPS, &mut |g, v| {
                let m = g.mean_axis(v[0], axis).unwrap();
                readout(g, m, &w)
            });
            assert!(worst < TOL, "case {case} axis {axis}: {worst}");
        }
        let worst_sum = grad_check(&[x.clone()], EPS, &mut |g, v| g.sum_all(v[0]));
        assert!(worst_sum < TOL, "case {case} sum: {worst_sum}");
        let worst_mean = grad_check(&[x], EPS, &mut |g, v| g.mean_all(v[0]));
        assert!(worst_mean < TOL, "case {case} mean: {worst_mean}");
    }
}

fn g_axis_len(axis: usize) -> usize {
    [2, 3, 4][axis]
}

#[test]
fn concat_slice_reshape() {
    let mut r = rng(22);
    for case in 0..CASES {
        let a = rand_tensor(&mut r, vec![2, 2, 3], -2.0, 2.0);
        let b = rand_tensor(&mut r, vec![2, 4, 3], -2.0, 2.0);
        let w = rand_weights(&mut r, 2 * 6 * 3);
        let worst = grad_check(&[a, b], EPS, &mut |g, v| {
            let c = g.concat(&[v[0], v[1]], 1).unwrap();
            readout(g, c, &w)
        });
        assert!(worst < TOL, "case {case} concat: {worst}");

        let x = rand_tensor(&mut r, vec![2, 5, 3], -2.0, 2.0);
        let w2 = rand_weights(&mut r, 2 * 2 * 3);
        let worst2 = grad_check(&[x.clone()], EPS, &mut |g, v| {
            let s = g.slice_axis(v[0], 1, 2, 2).unwrap();
            readout(g, s, &w2)
        });
        assert!(worst2 < TOL, "case {case} slice: {worst2}");

        let w3 = rand_weights(&mut r, 30);
        let worst3 = grad_check(&[x], EPS, &mut |g, v| {
            let s = g.reshape(v[0], vec![6, 5]).unwrap();
            readout(g, s, &w3)
        });
        assert!(worst3 < TOL, "case {case} reshape: {worst3}");
    }
}

#[test]
fn conv1d_strided() {
    let mut r = rng(23);
    for case in 0..CASES {
        let stride = 1 + case % 3;
        let l = 10;
        let k = 3;
        let l_out = (l - k) / stride + 1;
        let x = rand_tensor(&mut r, vec![2, 3, l], -1.0, 1.0);
        let wt = rand_tensor(&mut r, vec![4, 3, k], -1.0, 1.0);
        let b = rand_tensor(&mut r, vec![4], -0.5, 0.5);
        let w = rand_weights(&mut r, 2 * 4 * l_out);
        let worst = grad_check(&[x, wt, b], EPS, &mut |g, v| {
            let out = g.conv1d(v[0], v[1], v[2], stride).unwrap();
            readout(g, out, &w)
        });
        assert!(worst < TOL, "case {case} stride {stride}: {worst}");
    }
}

#[test]
fn categorical_logprob_and_entropy() {
    let mut r = rng(24);
    for case in 0..CASES {
        let logits = rand_tensor(&mut r, vec![5, 4], -2.0, 2.0);
        let actions: Vec<usize> = (0..5).map(|_| r.gen_range(0..4)).collect();
        let w = rand_weights(&mut r, 5);
        let acts = actions.clone();
        let worst = grad_check(&[logits.clone()], EPS, &mut |g, v| {
            let lp = g.categorical_logprob(v[0], &acts).unwrap();
            readout(g, lp, &w)
        });
        assert!(worst < TOL, "case {case} logprob: {worst}");

        let w2 = rand_weights(&mut r, 5);
        let worst2 = grad_check(&[logits], EPS, &mut |g, v| {
            let h = g.entropy(v[0]).unwrap();
            readout(g, h, &w2)
        });
        assert!(worst2 < TOL, "case {case} entropy: {worst2}");
    }
}

#[test]
fn loss_compositions() {
    let mut r = rng(25);
    for case in 0..CASES {
        let a = rand_tensor(&mut r, vec![4, 3], -2.0, 2.0);
        let b = rand_tensor(&mut r, vec![4, 3], -2.0, 2.0);
        let worst = grad_check(&[a.clone(), b.clone()], EPS, &mut |g, v| {
            losses::mse(g, v[0], v[1]).unwrap()
        });
        assert!(worst < TOL, "case {case} mse: {worst}");

        let mut mask = vec![0.0; 12];
        for row in 0..4 {
            if r.gen_bool(0.7) {
                mask[row * 3..(row + 1) * 3].iter_mut().for_each(|m| *m = 1.0);
            }
        }
        if mask.iter().all(|&m| m == 0.0) {
            mask[..3].iter_mut().for_each(|m| *m = 1.0);
        }
        let mask_c = mask.clone();
        let worst2 = grad_check(&[a, b], EPS, &mut |g, v| {
            let m = g.constant_from(vec![4, 3], mask_c.clone()).unwrap();
            losses::masked_mse(g, v[0], v[1], m).unwrap()
        });
        assert!(worst2 < TOL, "case {case} masked mse: {worst2}");
    }
}

#[test]
fn composite_network_end_to_end() {
    // A small feedforward net exercising matmul, layer norm, gelu, softmax
    // and a scalar loss, checked as one unit.
    let mut r = rng(26);
    for case in 0..20 {
        let x = rand_tensor(&mut r, vec![3, 4], -1.0, 1.0);
        let w1 = rand_tensor(&mut r, vec![4, 6], -0.5, 0.5);
        let b1 = rand_tensor(&mut r, vec![6], -0.1, 0.1);
        let gain = rand_tensor(&mut r, vec![6], 0.8, 1.2);
        let bias = rand_tensor(&mut r, vec![6], -0.1, 0.1);
        let w2 = rand_tensor(&mut r, vec![6, 4], -0.5, 0.5);
        let actions = vec![0, 2, 3];
        let acts = actions.clone();
        let worst = grad_check(&[x, w1, b1, gain, bias, w2], 1e-5, &mut |g, v| {
            let h = g.matmul(v[0], v[1]).unwrap();
            let hb = g.add(h, v[2]).unwrap();
            let ln = g.layer_norm(hb, v[3], v[4]).unwrap();
            let act = g.gelu(ln);
            let logits = g.matmul(act, v[5]).unwrap();
            let lp = g.categorical_logprob(logits, &acts).unwrap();
            let ml = g.mean_all(lp);
            g.scale(ml, -1.0)
        });
        assert!(worst < TOL, "case {case}: {worst}");
    }
}
