use super::*;
use crate::error::Error;

fn randn(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Checks the gradient of `Σ w ⊙ op(x)` w.r.t. `x` for a random projection `w`.
fn check_unary<F>(shape: Vec<usize>, seed: u64, op: F) -> f64
where
    F: Fn(&mut Graph<'_>, NodeId) -> NodeId,
{
    let mut rng = Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let x0 = randn(&mut rng, n);
    let build = |x: &[f64], grad: bool| -> (f64, Vec<f64>) {
        let mut g = Graph::new(0);
        let xi = g.leaf(Tensor::new(shape.clone(), x.to_vec()).unwrap(), grad);
        let y = op(&mut g, xi);
        let mut wr = Rng::seed_from_u64(seed ^ 0xABCD);
        let w = randn(&mut wr, g.value(y).len());
        let loss = g.weighted_sum(y, &w).unwrap();
        if grad {
            g.backward(loss).unwrap();
        }
        (g.scalar(loss), g.grad_or_zeros(xi))
    };
    let (_, analytic) = build(&x0, true);
    grad_check(|t| Ok(build(t, false).0), &x0, &analytic, 1e-5, None)
        .unwrap()
        .max_rel_error
}

#[test]
fn matmul_identity_and_hand_case() {
    let mut g = Graph::new(0);
    let i = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let b = g.constant(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
    let p = g.matmul(i, b).unwrap();
    assert_eq!(g.value(p), &[3.0, 4.0, 5.0, 6.0]);

    let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let c = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
    let p = g.matmul(a, c).unwrap();
    assert_eq!(g.value(p), &[11.0]);
    assert_eq!(g.shape(p), &[1, 1]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut g = Graph::new(0);
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 3]));
    match g.matmul(a, b) {
        Err(Error::Shape(msg)) => {
            assert!(msg.contains("[2, 3]"), "{msg}");
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = Rng::seed_from_u64(11);
    let a0 = randn(&mut rng, 20);
    let b0 = randn(&mut rng, 12);
    let w = randn(&mut rng, 15);
    let f = |theta: &[f64], grad: bool| -> (f64, Vec<f64>) {
        let mut g = Graph::new(0);
        let a = g.leaf(Tensor::matrix(5, 4, theta[..20].to_vec()).unwrap(), grad);
        let b = g.leaf(Tensor::matrix(4, 3, theta[20..].to_vec()).unwrap(), grad);
        let p = g.matmul(a, b).unwrap();
        let l = g.weighted_sum(p, &w).unwrap();
        if grad {
            g.backward(l).unwrap();
        }
        let mut gr = g.grad_or_zeros(a);
        gr.extend(g.grad_or_zeros(b));
        (g.scalar(l), gr)
    };
    let theta: Vec<f64> = a0.iter().chain(&b0).copied().collect();
    let (_, analytic) = f(&theta, true);
    let r = grad_check(|t| Ok(f(t, false).0), &theta, &analytic, 1e-5, None).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn softmax_fixtures() {
    let mut g = Graph::new(0);
    let a = g
        .constant(Tensor::matrix(3, 3, vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 5.0, 5.0, 5.0]).unwrap());
    let s = g.softmax_rows(a);
    let v = g.value(s);
    for &x in &v[..3] {
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }
    let expected = [0.09003, 0.24473, 0.66524];
    for (x, e) in v[3..6].iter().zip(expected) {
        assert!((x - e).abs() < 1e-5, "{x} vs {e}");
    }
    let big = g.constant(Tensor::matrix(1, 2, vec![1000.0, 1000.0]).unwrap());
    let s = g.softmax_rows(big);
    assert_eq!(g.value(s), &[0.5, 0.5]);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = Rng::seed_from_u64(5);
    let mut g = Graph::new(0);
    let data: Vec<f64> = (0..70).map(|_| rng.normal() * 30.0).collect();
    let a = g.constant(Tensor::matrix(7, 10, data).unwrap());
    let s = g.softmax_rows(a);
    for row in g.value(s).chunks(10) {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}

#[test]
fn masked_softmax_zeroes_masked_columns() {
    let mut g = Graph::new(0);
    let a = g.constant(Tensor::matrix(1, 4, vec![1.0, 9.0, 2.0, 3.0]).unwrap());
    let s = g
        .masked_softmax_rows(a, &[true, false, true, true])
        .unwrap();
    let v = g.value(s).to_vec();
    assert_eq!(v[1], 0.0);
    let b = g.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
    let d = g.softmax_rows(b);
    assert_eq!(&[v[0], v[2], v[3]], g.value(d));
}

#[test]
fn layer_norm_fixtures() {
    let mut g = Graph::new(0);
    let ones = g.constant(Tensor::filled(vec![4], 1.0));
    let zeros = g.constant(Tensor::zeros(vec![4]));
    let x = g.constant(Tensor::matrix(1, 4, vec![2.5; 4]).unwrap());
    let y = g.layer_norm(x, ones, zeros, 1e-5).unwrap();
    assert!(g.value(y).iter().all(|&v| v == 0.0));

    let ones = g.constant(Tensor::filled(vec![2], 1.0));
    let zeros = g.constant(Tensor::zeros(vec![2]));
    let x = g.constant(Tensor::matrix(1, 2, vec![1.0, 3.0]).unwrap());
    let y = g.layer_norm(x, ones, zeros, 1e-12).unwrap();
    let v = g.value(y);
    assert!(
        (v[0] + 1.0).abs() < 1e-10 && (v[1] - 1.0).abs() < 1e-10,
        "{v:?}"
    );
}

#[test]
fn layer_norm_gradient_all_inputs() {
    let mut rng = Rng::seed_from_u64(21);
    let theta: Vec<f64> = randn(&mut rng, 24 + 16);
    let w = randn(&mut rng, 24);
    let f = |t: &[f64], grad: bool| -> (f64, Vec<f64>) {
        let mut g = Graph::new(0);
        let x = g.leaf(Tensor::matrix(3, 8, t[..24].to_vec()).unwrap(), grad);
        let gain = g.leaf(Tensor::vector(t[24..32].to_vec()), grad);
        let bias = g.leaf(Tensor::vector(t[32..].to_vec()), grad);
        let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
        let l = g.weighted_sum(y, &w).unwrap();
        if grad {
            g.backward(l).unwrap();
        }
        let mut gr = g.grad_or_zeros(x);
        gr.extend(g.grad_or_zeros(gain));
        gr.extend(g.grad_or_zeros(bias));
        (g.scalar(l), gr)
    };
    let (_, analytic) = f(&theta, true);
    let r = grad_check(|t| Ok(f(t, false).0), &theta, &analytic, 1e-5, None).unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

#[test]
fn activation_fixtures() {
    assert_eq!(gelu_scalar(0.0), 0.0);
    assert_eq!(sigmoid_scalar(0.0), 0.5);
    assert!((gelu_scalar(1.0) - 0.841345).abs() < 1e-4);
    assert!((sigmoid_scalar(20.0) - 1.0).abs() < 1e-8);
    assert!(sigmoid_scalar(-20.0).abs() < 1e-8);
    assert!(sigmoid_scalar(-800.0).is_finite() && sigmoid_scalar(800.0).is_finite());
}

#[test]
fn every_differentiable_op_passes_grad_check() {
    let tol = 1e-4;
    let cases: Vec<(&str, f64)> = vec![
        (
            "softmax",
            check_unary(vec![4, 5], 1, |g, x| g.softmax_rows(x)),
        ),
        (
            "masked_softmax",
            check_unary(vec![4, 5], 2, |g, x| {
                g.masked_softmax_rows(x, &[true, false, true, true, false])
                    .unwrap()
            }),
        ),
        ("gelu", check_unary(vec![3, 4], 3, |g, x| g.gelu(x))),
        ("sigmoid", check_unary(vec![3, 4], 4, |g, x| g.sigmoid(x))),
        (
            "log",
            check_unary(vec![6], 5, |g, x| {
                let s = g.sigmoid(x);
                g.log(s)
            }),
        ),
        (
            "transpose",
            check_unary(vec![3, 4], 6, |g, x| g.transpose(x)),
        ),
        (
            "slice",
            check_unary(vec![3, 6], 7, |g, x| g.slice_cols(x, 2, 3).unwrap()),
        ),
        (
            "concat_cols",
            check_unary(vec![3, 4], 8, |g, x| {
                let a = g.slice_cols(x, 0, 1).unwrap();
                let b = g.slice_cols(x, 1, 3).unwrap();
                let gb = g.gelu(b);
                g.concat_cols(&[gb, a]).unwrap()
            }),
        ),
        (
            "concat_rows",
            check_unary(vec![2, 3], 9, |g, x| {
                let s = g.sigmoid(x);
                g.concat_rows(&[x, s]).unwrap()
            }),
        ),
        (
            "mask_rows",
            check_unary(vec![3, 3], 10, |g, x| {
                g.mask_rows(x, &[true, false, true]).unwrap()
            }),
        ),
        (
            "gather_rows",
            check_unary(vec![3, 3], 11, |g, x| g.gather_rows(x, &[2, 0, 2]).unwrap()),
        ),
        (
            "mul_self",
            check_unary(vec![2, 3], 12, |g, x| g.mul(x, x).unwrap()),
        ),
        (
            "add_row",
            check_unary(vec![3, 4], 13, |g, x| {
                let r = g.gather_rows(x, &[1]).unwrap();
                g.add_row(x, r).unwrap()
            }),
        ),
        (
            "scale_shift",
            check_unary(vec![5], 14, |g, x| {
                let s = g.scale(x, -2.5);
                g.add_scalar(s, 1.0)
            }),
        ),
        (
            "cross_entropy",
            check_unary(vec![1, 5], 15, |g, x| g.cross_entropy(x, 3).unwrap()),
        ),
        (
            "mean",
            check_unary(vec![2, 5], 16, |g, x| {
                let y = g.mul(x, x).unwrap();
                g.mean(y)
            }),
        ),
    ];
    for (name, err) in cases {
        assert!(err < tol, "{name}: relative error {err}");
    }
}

#[test]
fn backward_of_sum_is_ones() {
    let mut g = Graph::new(0);
    let x = g.variable(Tensor::vector(vec![1.0, -2.0, 3.5]));
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn backward_half_square_is_identity() {
    let mut g = Graph::new(0);
    let x = g.variable(Tensor::vector(vec![1.0, -2.0, 3.5]));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    let h = g.scale(s, 0.5);
    g.backward(h).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, -2.0, 3.5]);
}

#[test]
fn backward_requires_scalar_root() {
    let mut g = Graph::new(0);
    let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
    let y = g.sigmoid(x);
    assert!(matches!(g.backward(y), Err(Error::Contract(_))));
}

#[test]
fn unreachable_nodes_keep_zero_grad() {
    let mut g = Graph::new(0);
    let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
    let unused = g.variable(Tensor::vector(vec![5.0]));
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(g.grad(unused).is_none());
    assert_eq!(g.grad_or_zeros(unused), vec![0.0]);
}

#[test]
fn double_backward_accumulates_twice() {
    let mut g = Graph::new(0);
    let x = g.variable(Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 0.1, 0.7, -0.4]).unwrap());
    let w = g.variable(Tensor::matrix(3, 2, vec![1.0, 0.5, -0.2, 0.3, 0.9, -1.1]).unwrap());
    let p = g.matmul(x, w).unwrap();
    let a = g.gelu(p);
    let s = g.softmax_rows(a);
    let l = g.weighted_sum(s, &[1.0, -2.0, 0.5, 3.0]).unwrap();
    g.backward(l).unwrap();
    let once_x = g.grad(x).unwrap().to_vec();
    let once_p = g.grad(p).unwrap().to_vec();
    g.backward(l).unwrap();
    for (a, b) in g.grad(x).unwrap().iter().zip(&once_x) {
        assert_eq!(*a, 2.0 * b);
    }
    for (a, b) in g.grad(p).unwrap().iter().zip(&once_p) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn graph_is_topologically_ordered() {
    let mut g = Graph::new(0);
    let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
    let y = g.sigmoid(x);
    let z = g.mul(x, y).unwrap();
    let s = g.sum(z);
    for id in [y, z, s] {
        for p in g.parents(id) {
            assert!(p.index() < id.index());
        }
    }
    assert_eq!(g.op_tag(z), "mul");
    assert_eq!(g.len(), 4);
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let mut rng = Rng::seed_from_u64(99);
        let mut g = Graph::new(0);
        let x = g.constant(Tensor::matrix(4, 6, randn(&mut rng, 24)).unwrap());
        let w = g.constant(Tensor::matrix(6, 6, randn(&mut rng, 36)).unwrap());
        let p = g.matmul(x, w).unwrap();
        let s = g.softmax_rows(p);
        let a = g.gelu(s);
        g.value(a).to_vec()
    };
    assert_eq!(run(), run());
}
