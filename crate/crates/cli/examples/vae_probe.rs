// scratch probe: VAE convergence and PSNR by frame population
use vdq_cli::pipeline::{build_frame_bank, vae_psnr};
use vdq_corpus::{generate_base, read_corpus};
use vdq_diffusion::{psnr, Vae};
use vdq_tensor::adam::{Adam, AdamConfig};
use vdq_tensor::rng::{derive_seed, rng_from};
use vdq_tensor::{backward, no_grad};
use vdq_vqa::bilinear_resize_video;

fn main() {
    let corpus = read_corpus(std::path::Path::new("/tmp/mini2/corpus")).unwrap();
    let bank = build_frame_bank(&corpus, 48, 7).unwrap();
    println!("bank: {} frames", bank.frames.len());

    let mut clean = Vec::new();
    for seed in 9000..9016u64 {
        let v = generate_base(seed, 2, 96);
        let r = bilinear_resize_video(&v, 48, 48).unwrap();
        for t in 0..2 {
            clean.push(r.narrow(1, t, 1).unwrap().reshape(&[1, 3, 48, 48]).unwrap());
        }
    }

    let mut vae = Vae::new(&mut rng_from(derive_seed(7, 0xae)));
    let mut opt = Adam::new(AdamConfig::new(1.5e-3, 0.0));
    let t0 = std::time::Instant::now();
    for it in 0..4000usize {
        if it == 2400 { opt.cfg.lr = 5e-4; }
        if it == 3400 { opt.cfg.lr = 2e-4; }
        let mut rng = rng_from(derive_seed(7, 0xae00_0000u64 + it as u64));
        let frames = bank.sample_batch(8, &mut rng).unwrap();
        let loss = vae.reconstruction_loss(&frames).unwrap();
        let grads = backward(&loss).unwrap();
        opt.step(&mut vae, &grads);
        if (it + 1) % 400 == 0 {
            let bank_psnr = vae_psnr(&vae, &bank, 48, 7).unwrap();
            let clean_psnr: f64 = no_grad(|| {
                clean.iter().map(|f| {
                    let rec = vae.decode(&vae.encode(f).unwrap()).unwrap();
                    psnr(&rec, f)
                }).sum::<f64>() / clean.len() as f64
            });
            println!(
                "iter {:5}: loss {:.5}, bank psnr {:.2}, clean psnr {:.2}  ({:.0}s)",
                it + 1, loss.item(), bank_psnr, clean_psnr, t0.elapsed().as_secs_f64()
            );
        }
    }
}
