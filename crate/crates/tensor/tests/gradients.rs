//! Finite-difference validation of every registered primitive, plus the
//! gradient-checker behaviour itself (including a deliberately wrong
//! gradient as a negative control).

use vdq_tensor::rng::rng_from;
use vdq_tensor::{backward, grad_check, Result, Tensor};

/// FD-checks `f` on random inputs drawn from [-2, 2]; every primitive must
/// agree with central differences within 1e-4 relative error at 64-bit.
fn check(f: &dyn Fn(&[Tensor]) -> Result<Tensor>, shapes: &[&[usize]], seed: u64) {
    let mut rng = rng_from(seed);
    let inputs: Vec<Tensor> = shapes
        .iter()
        .map(|s| Tensor::rand_uniform(s, -2.0, 2.0, &mut rng))
        .collect();
    let report = grad_check(f, &inputs, 1e-5, 1e-4, None).unwrap();
    assert!(report.passed, "{report}");
}

/// Same, but inputs shifted into (0.5, 2.5) for domain-restricted ops.
fn check_positive(f: &dyn Fn(&[Tensor]) -> Result<Tensor>, shapes: &[&[usize]], seed: u64) {
    let mut rng = rng_from(seed);
    let inputs: Vec<Tensor> = shapes
        .iter()
        .map(|s| Tensor::rand_uniform(s, 0.5, 2.5, &mut rng))
        .collect();
    let report = grad_check(f, &inputs, 1e-6, 1e-4, None).unwrap();
    assert!(report.passed, "{report}");
}

// A smooth scalar readout so reductions see a non-trivial downstream gradient.
fn readout(t: &Tensor) -> Result<Tensor> {
    t.mul(t)?.add(t)?.mean_all()
}

#[test]
fn backward_simple_examples() {
    // d/dx x^2 at x = 3 -> 6
    let x = Tensor::scalar(3.0).traced();
    let y = x.mul(&x).unwrap();
    let g = backward(&y).unwrap();
    assert!((g.get(&x).unwrap().item() - 6.0).abs() < 1e-12);

    // d/da (a*b) at a=2, b=5 -> 5
    let a = Tensor::scalar(2.0).traced();
    let b = Tensor::scalar(5.0);
    let y = a.mul(&b).unwrap();
    let g = backward(&y).unwrap();
    assert!((g.get(&a).unwrap().item() - 5.0).abs() < 1e-12);

    // non-scalar loss rejected
    let v = Tensor::ones(&[3]).traced();
    assert!(backward(&v).is_err());
}

#[test]
fn backward_resets_between_calls() {
    let x = Tensor::scalar(3.0).traced();
    let y = x.mul(&x).unwrap();
    let g1 = backward(&y).unwrap().get(&x).unwrap().item();
    let g2 = backward(&y).unwrap().get(&x).unwrap().item();
    assert_eq!(g1, g2); // no accumulation across calls
}

#[test]
fn elementwise_primitives_match_fd() {
    check(&|x| x[0].add(&x[1])?.mean_all(), &[&[3, 4], &[3, 4]], 1);
    check(&|x| x[0].sub(&x[1])?.mean_all(), &[&[3, 4], &[4]], 2);
    check(&|x| readout(&x[0].mul(&x[1])?), &[&[3, 4], &[3, 4]], 3);
    check_positive(&|x| readout(&x[0].div(&x[1])?), &[&[3, 4], &[3, 4]], 4);
    check(&|x| x[0].neg()?.mul(&x[0])?.mean_all(), &[&[5]], 5);
    check(&|x| x[0].mul_scalar(1.7)?.mean_all(), &[&[5]], 6);
    check(&|x| x[0].exp()?.mean_all(), &[&[5]], 7);
    check_positive(&|x| x[0].log()?.mean_all(), &[&[5]], 8);
    check_positive(&|x| x[0].sqrt()?.mean_all(), &[&[5]], 9);
    check_positive(&|x| x[0].powf(2.5)?.mean_all(), &[&[5]], 10);
    check(&|x| x[0].sigmoid()?.mean_all(), &[&[7]], 11);
    check(&|x| x[0].silu()?.mean_all(), &[&[7]], 12);
    check(&|x| x[0].relu()?.mean_all(), &[&[7]], 13);
    check(&|x| x[0].tanh()?.mean_all(), &[&[7]], 14);
    check(&|x| x[0].abs()?.mean_all(), &[&[7]], 15);
    check(&|x| x[0].softplus()?.mean_all(), &[&[7]], 16);
}

#[test]
fn broadcast_gradients_match_fd() {
    check(&|x| readout(&x[0].mul(&x[1])?), &[&[2, 1, 4], &[3, 1]], 17);
    check(&|x| readout(&x[0].add(&x[1])?), &[&[1], &[2, 3]], 18);
}

#[test]
fn matmul_gradients_match_fd() {
    check(&|x| readout(&x[0].matmul(&x[1])?), &[&[3, 4], &[4, 2]], 19);
    check(&|x| readout(&x[0].matmul(&x[1])?), &[&[2, 3, 4], &[4, 2]], 20);
    check(&|x| readout(&x[0].matmul(&x[1])?), &[&[2, 2, 3], &[2, 3, 2]], 21);
}

#[test]
fn conv_gradients_match_fd() {
    check(
        &|x| readout(&x[0].conv(&x[1], &[1, 1], &[1, 1])?),
        &[&[2, 2, 5, 5], &[3, 2, 3, 3]],
        22,
    );
    check(
        &|x| readout(&x[0].conv(&x[1], &[2, 2], &[0, 0])?),
        &[&[1, 2, 6, 6], &[2, 2, 2, 2]],
        23,
    );
    check(
        &|x| readout(&x[0].conv(&x[1], &[1], &[2])?),
        &[&[1, 2, 8], &[2, 2, 4]],
        24,
    );
    check(
        &|x| readout(&x[0].conv(&x[1], &[1, 2, 2], &[0, 0, 0])?),
        &[&[1, 2, 2, 4, 4], &[3, 2, 1, 2, 2]],
        25,
    );
    check(&|x| readout(&x[0].upsample_nearest2d(2)?), &[&[1, 2, 3, 3]], 26);
}

#[test]
fn reduction_gradients_match_fd() {
    check(&|x| readout(&x[0].sum(&[1], false)?), &[&[3, 4]], 27);
    check(&|x| readout(&x[0].mean(&[0], true)?), &[&[3, 4]], 28);
    check(&|x| readout(&x[0].max(&[1], false)?), &[&[3, 4]], 29);
    check(&|x| readout(&x[0].softmax(1)?), &[&[3, 4]], 30);
    check(
        &|x| readout(&x[0].layer_norm(1, Some(&x[1]), Some(&x[2]), 1e-5)?),
        &[&[3, 6], &[6], &[6]],
        31,
    );
}

#[test]
fn shape_op_gradients_match_fd() {
    check(&|x| readout(&x[0].reshape(&[4, 3])?), &[&[3, 4]], 32);
    check(&|x| readout(&x[0].permute(&[1, 0])?), &[&[3, 4]], 33);
    check(&|x| readout(&x[0].narrow(1, 1, 2)?), &[&[3, 4]], 34);
    check(&|x| readout(&x[0].flip(0)?), &[&[3, 4]], 35);
    check(&|x| readout(&x[0].pad(&[(1, 0), (0, 2)])?), &[&[3, 4]], 36);
    check(
        &|x| readout(&Tensor::cat(&[&x[0], &x[1]], 1)?),
        &[&[3, 2], &[3, 3]],
        37,
    );
    check(&|x| readout(&x[0].gather_rows(&[2, 0, 2, 1])?), &[&[3, 4]], 38);
}

#[test]
fn full_pipeline_gradient_matches_fd() {
    // conv -> norm -> nonlinearity -> matmul -> softmax readout, checked
    // end to end at 1e-3 relative.
    let f = |x: &[Tensor]| -> Result<Tensor> {
        let h = x[0].conv(&x[1], &[1, 1], &[1, 1])?;
        let h = h.layer_norm(1, None, None, 1e-5)?;
        let h = h.silu()?;
        let flat = h.reshape(&[2, 2 * 16])?;
        let logits = flat.matmul(&x[2])?;
        let p = logits.softmax(1)?;
        p.mul(&p)?.mean_all()
    };
    let mut rng = rng_from(40);
    let inputs = vec![
        Tensor::rand_uniform(&[2, 3, 4, 4], -2.0, 2.0, &mut rng),
        Tensor::rand_uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut rng),
        Tensor::rand_uniform(&[32, 5], -1.0, 1.0, &mut rng),
    ];
    let report = grad_check(&f, &inputs, 1e-5, 1e-3, None).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn grad_check_linear_is_near_exact() {
    // central differences are exact for linear functions up to rounding
    let c = Tensor::from_vec(vec![0.3, -1.2, 2.5, 0.9], &[4]);
    let f = move |x: &[Tensor]| -> Result<Tensor> { x[0].mul(&c)?.sum_all() };
    let inputs = vec![Tensor::from_vec(vec![1.0, 2.0, -1.0, 0.5], &[4])];
    let report = grad_check(&f, &inputs, 1e-5, 1e-9, None).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn grad_check_softmax_cross_entropy() {
    let f = |x: &[Tensor]| -> Result<Tensor> {
        let p = x[0].softmax(1)?;
        // cross entropy against class 0 per row
        let picked = p.narrow(1, 0, 1)?;
        picked.log()?.neg()?.mean_all()
    };
    let mut rng = rng_from(41);
    let inputs = vec![Tensor::rand_uniform(&[4, 5], -2.0, 2.0, &mut rng)];
    let report = grad_check(&f, &inputs, 1e-5, 1e-4, None).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn grad_check_rejects_wrong_gradient() {
    // f(x) = sum(x * detach(x)): the tape sees d/dx = x, the true gradient
    // is 2x — off by exactly 2x, so the check must fail.
    let f = |x: &[Tensor]| -> Result<Tensor> { x[0].mul(&x[0].detached())?.sum_all() };
    let mut rng = rng_from(42);
    let inputs = vec![Tensor::rand_uniform(&[6], 0.5, 2.0, &mut rng)];
    let report = grad_check(&f, &inputs, 1e-5, 1e-4, None).unwrap();
    assert!(!report.passed, "negative control unexpectedly passed: {report}");
}

#[test]
fn grad_check_rejects_non_finite_objective() {
    let f = |x: &[Tensor]| -> Result<Tensor> {
        x[0].map_values(|_| f64::NAN).sum_all()
    };
    let inputs = vec![Tensor::ones(&[2])];
    assert!(grad_check(&f, &inputs, 1e-5, 1e-4, None).is_err());
}

#[test]
fn gradient_shapes_match_forward_values() {
    let mut rng = rng_from(43);
    let a = Tensor::randn(&[3, 1], &mut rng).traced();
    let b = Tensor::randn(&[3, 4], &mut rng).traced();
    let loss = a.mul(&b).unwrap().mean_all().unwrap();
    let g = backward(&loss).unwrap();
    assert_eq!(g.get(&a).unwrap().shape(), a.shape());
    assert_eq!(g.get(&b).unwrap().shape(), b.shape());
}
