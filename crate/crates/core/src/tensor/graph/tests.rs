use super::*;
use crate::tensor::gradcheck::check_tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape, 1.0, &mut rng)
}

/// Runs a forward closure twice: once for analytic grads, then repeatedly
/// inside the finite-difference oracle, perturbing the checked input.
fn gradcheck_op(
    shape: &[usize],
    seed: u64,
    forward: impl Fn(&mut Graph<f64>, NodeId) -> NodeId,
) {
    let x0 = randn(shape, seed);
    let mut g = Graph::new();
    let x = g.leaf(x0.clone());
    let out = forward(&mut g, x);
    let loss = g.mean_all(out);
    g.backward(loss).unwrap();
    let analytic = g.grad(x).unwrap().clone();

    let worst = check_tensor(&x0, &analytic, H, |probe| {
        let mut g = Graph::new();
        let x = g.leaf(probe.clone());
        let out = forward(&mut g, x);
        let loss = g.mean_all(out);
        g.value(loss).item()
    });
    assert!(worst < TOL, "max relative error {worst}");
}

#[test]
fn gradcheck_add_mul_scale() {
    gradcheck_op(&[3, 4], 1, |g, x| {
        let y = g.constant(randn(&[3, 4], 100));
        let a = g.add(x, y).unwrap();
        let m = g.mul(a, x).unwrap();
        g.scale(m, 1.7)
    });
}

#[test]
fn gradcheck_matmul_both_sides() {
    // Left operand.
    gradcheck_op(&[3, 5], 2, |g, x| {
        let w = g.constant(randn(&[5, 2], 101));
        g.matmul(x, w).unwrap()
    });
    // Right operand.
    gradcheck_op(&[5, 2], 3, |g, x| {
        let a = g.constant(randn(&[3, 5], 102));
        g.matmul(a, x).unwrap()
    });
}

#[test]
fn gradcheck_conv1d_input_and_weight() {
    for dilation in [1usize, 2, 4] {
        gradcheck_op(&[2, 3, 16], 4, |g, x| {
            let w = g.constant(randn(&[5, 3, 3], 103));
            g.conv1d(x, w, dilation).unwrap()
        });
        gradcheck_op(&[5, 3, 3], 5, |g, w| {
            let x = g.constant(randn(&[2, 3, 16], 104));
            g.conv1d(x, w, dilation).unwrap()
        });
    }
}

#[test]
fn gradcheck_bias_and_channel_add() {
    gradcheck_op(&[4], 6, |g, b| {
        let x = g.constant(randn(&[2, 4, 8], 105));
        g.bias_add(x, b).unwrap()
    });
    gradcheck_op(&[3], 7, |g, b| {
        let x = g.constant(randn(&[5, 3], 106));
        g.bias_add(x, b).unwrap()
    });
    gradcheck_op(&[2, 4], 8, |g, v| {
        let x = g.constant(randn(&[2, 4, 8], 107));
        g.channel_add(x, v).unwrap()
    });
    gradcheck_op(&[2, 4, 8], 9, |g, x| {
        let v = g.constant(randn(&[2, 4], 108));
        g.channel_add(x, v).unwrap()
    });
}

#[test]
fn gradcheck_activations() {
    gradcheck_op(&[3, 7], 10, |g, x| g.silu(x));
    gradcheck_op(&[3, 7], 11, |g, x| g.tanh(x));
    gradcheck_op(&[3, 7], 12, |g, x| g.sigmoid(x));
}

#[test]
fn gradcheck_embedding() {
    gradcheck_op(&[6, 4], 13, |g, table| {
        g.embedding_lookup(table, &[1, 3, 3, 0]).unwrap()
    });
}

#[test]
fn gradcheck_shape_ops() {
    gradcheck_op(&[2, 6], 14, |g, x| g.reshape(x, &[3, 4]).unwrap());
    gradcheck_op(&[2, 5, 3], 15, |g, x| g.slice(x, 1, 1, 4).unwrap());
    gradcheck_op(&[2, 3, 4], 16, |g, x| {
        let y = g.constant(randn(&[2, 2, 4], 109));
        g.concat(&[x, y], 1).unwrap()
    });
}

#[test]
fn gradcheck_reductions_and_loss() {
    gradcheck_op(&[4, 5], 17, |g, x| {
        let s = g.sum_all(x);
        g.scale(s, 0.3)
    });
    gradcheck_op(&[2, 6, 3], 18, |g, x| g.mean_axis(x, 1).unwrap());
    gradcheck_op(&[3, 4], 19, |g, x| {
        let target = g.constant(randn(&[3, 4], 110));
        g.mse_loss(x, target).unwrap()
    });
}

#[test]
fn gradcheck_fanout_accumulates() {
    // x used twice: gradient must be the sum over both paths.
    gradcheck_op(&[3, 3], 20, |g, x| {
        let a = g.silu(x);
        let b = g.tanh(x);
        g.add(a, b).unwrap()
    });
}

#[test]
fn conv1d_same_padding_keeps_length() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 128]));
    let w = g.constant(Tensor::zeros(&[3, 2, 3]));
    let y = g.conv1d(x, w, 4).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 3, 128]);
}

#[test]
fn conv1d_matches_manual_reference() {
    // Hand-rolled dilated convolution as an independent cross-check.
    let x0 = randn(&[1, 2, 9], 30);
    let w0 = randn(&[1, 2, 3], 31);
    let d = 2usize;
    let pad = 2usize;
    let mut g = Graph::<f64>::new();
    let x = g.constant(x0.clone());
    let w = g.constant(w0.clone());
    let y = g.conv1d(x, w, d).unwrap();
    for t in 0..9usize {
        let mut expect = 0.0;
        for ci in 0..2usize {
            for k in 0..3usize {
                let src = t as isize + (k * d) as isize - pad as isize;
                if (0..9).contains(&src) {
                    expect += w0.data()[ci * 3 + k] * x0.data()[ci * 9 + src as usize];
                }
            }
        }
        assert!((g.value(y).data()[t] - expect).abs() < 1e-12);
    }
}

#[test]
fn silu_zero_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::scalar(0.0));
    let y = g.silu(x);
    assert_eq!(g.value(y).item(), 0.0);
}

#[test]
fn matmul_identity() {
    let n = 4;
    let mut eye = Tensor::<f64>::zeros(&[n, n]);
    for i in 0..n {
        eye.data_mut()[i * n + i] = 1.0;
    }
    let x0 = randn(&[n, 3], 32);
    let mut g = Graph::new();
    let i = g.constant(eye);
    let x = g.constant(x0.clone());
    let y = g.matmul(i, x).unwrap();
    assert_eq!(g.value(y).data(), x0.data());
}

#[test]
fn sum_gradient_is_ones() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(randn(&[3, 4], 33));
    let s = g.sum_all(x);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn mse_of_identical_inputs_has_zero_grad() {
    let x0 = randn(&[5], 34);
    let mut g = Graph::<f64>::new();
    let x = g.leaf(x0.clone());
    let y = g.constant(x0);
    let loss = g.mse_loss(x, y).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.value(loss).item(), 0.0);
    assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(randn(&[3], 35));
    let y = g.silu(x);
    assert!(g.backward(y).is_err());
}

#[test]
fn shape_mismatches_rejected() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[3, 2]));
    assert!(g.add(a, b).is_err());
    assert!(g.mul(a, b).is_err());
    assert!(g.mse_loss(a, b).is_err());
    let w = g.constant(Tensor::zeros(&[4, 5, 3]));
    let x3 = g.constant(Tensor::zeros(&[1, 2, 8]));
    assert!(g.conv1d(x3, w, 1).is_err());
}

#[test]
fn embedding_index_out_of_range() {
    let mut g = Graph::<f32>::new();
    let table = g.leaf(Tensor::zeros(&[4, 2]));
    assert!(g.embedding_lookup(table, &[4]).is_err());
}

#[test]
fn graphs_do_not_interact() {
    let x0 = randn(&[4], 36);
    let mut g1 = Graph::<f64>::new();
    let mut g2 = Graph::<f64>::new();
    let a = g1.leaf(x0.clone());
    let b = g2.leaf(x0.clone());
    let s1 = g1.sum_all(a);
    let _junk = g2.scale(b, 100.0);
    g1.backward(s1).unwrap();
    assert!(g2.grad(b).is_none());
    assert!(g1.grad(a).is_some());
}
