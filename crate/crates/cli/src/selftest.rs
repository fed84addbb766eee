//! Fast invariant suite behind `vdq selftest`: scan equivalence, ZOH closed
//! forms, schedule identities, metric oracles, and gradient checks on
//! miniature nets. Fault injection perturbs one check's computed values so
//! the detection logic itself can be exercised end to end.

use vdq_diffusion::{cosine_schedule, spaced_timesteps};
use vdq_eval::{plcc, srcc};
use vdq_ssm::{scan_parallel, scan_sequential, zoh_discretize, BiMambaBlock, MambaConfig};
use vdq_tensor::rng::{rng_from, Rng};
use vdq_tensor::{grad_check, Tensor};
use vdq_vqa::ScoreHeads;

pub struct CheckResult {
    pub name: &'static str,
    pub error: Option<String>,
}

pub struct SelftestReport {
    pub results: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.error.is_none())
    }
}

pub fn run_selftest(inject_fault: Option<&str>) -> SelftestReport {
    let faulty = |name: &str| inject_fault == Some(name);
    let checks: Vec<(&'static str, Box<dyn Fn(bool) -> Result<(), String>>)> = vec![
        ("scan_equivalence", Box::new(check_scan_equivalence)),
        ("zoh_closed_forms", Box::new(check_zoh)),
        ("schedule_identities", Box::new(check_schedule)),
        ("metric_oracles", Box::new(check_metrics)),
        ("grad_check_miniature", Box::new(check_gradients)),
        ("score_head_invariants", Box::new(check_heads)),
    ];
    let mut results = Vec::new();
    for (name, check) in checks {
        let error = check(faulty(name)).err();
        results.push(CheckResult { name, error });
    }
    SelftestReport { results }
}

fn random_system(l: usize, rng: &mut Rng) -> (vdq_ssm::DiscreteSsm, Tensor, Tensor, Tensor) {
    let a = Tensor::rand_uniform(&[4], -4.0, -0.05, rng);
    let b = Tensor::randn(&[l, 4], rng);
    let delta = Tensor::rand_uniform(&[l], 1e-3, 1.0, rng);
    let disc = zoh_discretize(&a, &b, &delta).unwrap();
    (
        disc,
        Tensor::randn(&[l, 4], rng),
        Tensor::randn(&[3], rng),
        Tensor::randn(&[l, 3], rng),
    )
}

fn check_scan_equivalence(fault: bool) -> Result<(), String> {
    let mut rng = rng_from(1);
    for &l in &[1usize, 3, 17, 1024] {
        for _ in 0..5 {
            let (disc, c, d, x) = random_system(l, &mut rng);
            let seq = scan_sequential(&disc, &c, &d, &x).map_err(|e| e.to_string())?;
            let mut par = scan_parallel(&disc, &c, &d, &x).map_err(|e| e.to_string())?;
            if fault {
                par = par.mul_scalar(1.0 + 1e-3).unwrap();
            }
            for (a, b) in seq.data().iter().zip(par.data().iter()) {
                let rel = (a - b).abs() / (a.abs() + b.abs() + 1e-12);
                if rel > 1e-6 {
                    return Err(format!("scan mismatch at L={l}: rel err {rel:.3e}"));
                }
            }
        }
    }
    Ok(())
}

fn check_zoh(fault: bool) -> Result<(), String> {
    let a = Tensor::from_vec(vec![-1.0], &[1]);
    let b = Tensor::ones(&[1, 1]);
    let delta = Tensor::from_vec(vec![2.0f64.ln()], &[1]);
    let d = zoh_discretize(&a, &b, &delta).map_err(|e| e.to_string())?;
    let mut a_bar = d.a_bar.item();
    if fault {
        a_bar += 1e-6;
    }
    if (a_bar - 0.5).abs() > 1e-12 || (d.b_bar.item() - 0.5).abs() > 1e-12 {
        return Err(format!(
            "closed form mismatch: a_bar {a_bar}, b_bar {}",
            d.b_bar.item()
        ));
    }
    // series branch against the quadratic Taylor expansion
    let a = Tensor::from_vec(vec![1e-9], &[1]);
    let b = Tensor::from_vec(vec![2.0], &[1, 1]);
    let delta = Tensor::from_vec(vec![0.5], &[1]);
    let d = zoh_discretize(&a, &b, &delta).map_err(|e| e.to_string())?;
    let taylor = (0.5 + 1e-9 * 0.25 / 2.0) * 2.0;
    if (d.b_bar.item() - taylor).abs() > 1e-10 {
        return Err("series branch disagrees with Taylor expansion".into());
    }
    Ok(())
}

fn check_schedule(fault: bool) -> Result<(), String> {
    let sched = cosine_schedule(1000).map_err(|e| e.to_string())?;
    if sched.alpha_bar(1) < 0.999 || sched.alpha_bar(1000) >= 0.01 {
        return Err("cosine endpoints out of range".into());
    }
    let mut prod = 1.0;
    for t in 1..=1000 {
        prod *= sched.alpha(t);
        if t > 1 && sched.alpha_bar(t) >= sched.alpha_bar(t - 1) {
            return Err(format!("alpha_bar not strictly decreasing at t={t}"));
        }
        if (sched.alpha_bar(t) - prod).abs() > 1e-12 {
            return Err(format!("alpha_bar product identity broken at t={t}"));
        }
    }
    let spaced = spaced_timesteps(&sched, 10).map_err(|e| e.to_string())?;
    for i in 1..=10 {
        let mut want = sched.alpha_bar(spaced.original_step(i));
        if fault && i == 7 {
            want += 1e-9;
        }
        if (spaced.alpha_bar(i) - want).abs() > 1e-12 {
            return Err(format!("respaced alpha_bar does not telescope at i={i}"));
        }
    }
    Ok(())
}

fn check_metrics(fault: bool) -> Result<(), String> {
    let pred = vec![3.0, 1.0, 2.0];
    let truth = vec![1.0, 2.0, 3.0];
    let mut s = srcc(&pred, &truth).map_err(|e| e.to_string())?;
    if fault {
        s += 1e-6;
    }
    if (s + 0.5).abs() > 1e-12 {
        return Err(format!("rank example expected -0.5, got {s}"));
    }
    let mut rng = rng_from(2);
    let x = Tensor::randn(&[20], &mut rng).to_vec();
    let y = Tensor::randn(&[20], &mut rng).to_vec();
    let base_s = srcc(&x, &y).map_err(|e| e.to_string())?;
    let exp_x: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    if (srcc(&exp_x, &y).unwrap() - base_s).abs() > 1e-12 {
        return Err("rank correlation not invariant under exp".into());
    }
    let base_p = plcc(&x, &y).map_err(|e| e.to_string())?;
    let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    if (plcc(&affine, &y).unwrap() - base_p).abs() > 1e-12 {
        return Err("linear correlation not affine invariant".into());
    }
    Ok(())
}

fn check_gradients(fault: bool) -> Result<(), String> {
    // conv -> norm -> matmul composite
    let f = |x: &[Tensor]| -> vdq_tensor::Result<Tensor> {
        let h = x[0].conv(&x[1], &[1, 1], &[1, 1])?.silu()?;
        let flat = h.reshape(&[1, h.len()])?;
        flat.matmul(&x[2])?.softmax(1)?.powf(2.0)?.mean_all()
    };
    let mut rng = rng_from(3);
    let inputs = vec![
        Tensor::rand_uniform(&[1, 2, 4, 4], -1.0, 1.0, &mut rng),
        Tensor::rand_uniform(&[2, 2, 3, 3], -1.0, 1.0, &mut rng),
        Tensor::rand_uniform(&[32, 4], -1.0, 1.0, &mut rng),
    ];
    let tol = if fault { 1e-12 } else { 1e-3 };
    let report = grad_check(&f, &inputs, 1e-5, tol, None).map_err(|e| e.to_string())?;
    if !report.passed {
        return Err(format!("composite net: {report}"));
    }

    // miniature bidirectional block
    let cfg = MambaConfig {
        c_emb: 4,
        n_state: 2,
        d_inner: 6,
        conv_kernel: 3,
    };
    let block = BiMambaBlock::new(cfg, &mut rng);
    let g = |x: &[Tensor]| -> vdq_tensor::Result<Tensor> {
        let y = block.forward(&x[0])?;
        y.mul(&y)?.mean_all()
    };
    let tokens = Tensor::rand_uniform(&[4, 4], -1.0, 1.0, &mut rng);
    let report = grad_check(&g, &[tokens], 1e-5, 1e-3, None).map_err(|e| e.to_string())?;
    if !report.passed {
        return Err(format!("bidirectional block: {report}"));
    }
    Ok(())
}

fn check_heads(fault: bool) -> Result<(), String> {
    let mut rng = rng_from(4);
    let heads = ScoreHeads::new(12, 8, 4, 0.1, &mut rng);
    for i in 0..100 {
        let s = Tensor::randn(&[12], &mut rng);
        let d = Tensor::randn(&[12], &mut rng);
        let mut pred = heads
            .forward(&s, &d, false, &mut rng)
            .map_err(|e| e.to_string())?;
        if fault && i == 50 {
            pred.q_hat = Tensor::scalar(pred.value() + 1.0);
        }
        if !pred.validate() {
            return Err(format!("prediction invariants violated on forward {i}"));
        }
    }
    Ok(())
}
