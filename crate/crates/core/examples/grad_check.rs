//! Reverse-mode gradients of a two-layer network checked against central differences.

use iared::gradcore::{grad_check, Graph, Rng, Tensor};

fn loss(theta: &[f64], x: &Tensor, with_grad: bool) -> (f64, Vec<f64>) {
    let mut g = Graph::new(0);
    let w1 = g.leaf(
        Tensor::matrix(4, 6, theta[..24].to_vec()).unwrap(),
        with_grad,
    );
    let w2 = g.leaf(
        Tensor::matrix(6, 3, theta[24..].to_vec()).unwrap(),
        with_grad,
    );
    let xi = g.constant(x.clone());
    let h = g.matmul(xi, w1).unwrap();
    let h = g.gelu(h);
    let logits = g.matmul(h, w2).unwrap();
    let l = g.cross_entropy(logits, 2).unwrap();
    if with_grad {
        g.backward(l).unwrap();
    }
    let mut grad = g.grad_or_zeros(w1);
    grad.extend(g.grad_or_zeros(w2));
    (g.scalar(l), grad)
}

fn main() -> iared::Result<()> {
    let mut rng = Rng::seed_from_u64(0);
    let x = Tensor::matrix(1, 4, (0..4).map(|_| rng.normal()).collect())?;
    let theta: Vec<f64> = (0..42).map(|_| 0.5 * rng.normal()).collect();
    let (value, analytic) = loss(&theta, &x, true);
    let report = grad_check(|t| Ok(loss(t, &x, false).0), &theta, &analytic, 1e-5, None)?;
    println!("loss = {value:.6}");
    println!(
        "worst coordinate {}: analytic {:.8} numeric {:.8} relative error {:.2e}",
        report.worst_index, report.analytic, report.numeric, report.max_rel_error
    );
    Ok(())
}
