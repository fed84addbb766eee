use std::time::Instant;
use vdq_tensor::rng::rng_from;
use vdq_tensor::Tensor;

fn main() {
    let mut rng = rng_from(42);
    // conv2d shapes like the denoiser hot path: [8,32,12,12] conv 32->32 3x3
    let x = Tensor::randn(&[8, 32, 12, 12], &mut rng);
    let w = Tensor::randn(&[32, 32, 3, 3], &mut rng);
    let t0 = Instant::now();
    let iters = 2000;
    let mut acc = 0.0;
    for _ in 0..iters {
        let y = x.conv(&w, &[1, 1], &[1, 1]).unwrap();
        acc += y.data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    let macs = (8 * 12 * 12 * 32 * 32 * 9) as f64 * iters as f64;
    println!("conv fwd: {:.2} GMAC/s ({:.3}s, acc={acc:e})", macs / dt / 1e9, dt);

    // training-style fwd+bwd through one conv
    let t0 = Instant::now();
    let iters = 600;
    let mut acc = 0.0;
    for _ in 0..iters {
        let wt = w.detached().traced();
        let y = x.conv(&wt, &[1, 1], &[1, 1]).unwrap();
        let loss = y.mul(&y).unwrap().mean_all().unwrap();
        let g = vdq_tensor::backward(&loss).unwrap();
        acc += g.get(&wt).unwrap().data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    let macs = (8 * 12 * 12 * 32 * 32 * 9 * 3) as f64 * iters as f64;
    println!("conv fwd+bwd: {:.2} GMAC/s ({:.3}s, acc={acc:e})", macs / dt / 1e9, dt);

    // big matmul
    let a = Tensor::randn(&[512, 512], &mut rng);
    let b = Tensor::randn(&[512, 512], &mut rng);
    let t0 = Instant::now();
    let iters = 40;
    let mut acc = 0.0;
    for _ in 0..iters {
        let c = a.matmul(&b).unwrap();
        acc += c.data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    let macs = (512f64).powi(3) * iters as f64;
    println!("matmul 512: {:.2} GMAC/s ({:.3}s, acc={acc:e})", macs / dt / 1e9, dt);
}
