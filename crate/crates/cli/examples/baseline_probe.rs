// scratch probe: bilinear 4x down-up PSNR baseline on clean branch frames
use vdq_corpus::generate_base;
use vdq_diffusion::psnr;
use vdq_vqa::bilinear_resize_video;

fn main() {
    let mut total = 0.0;
    let mut n = 0;
    for seed in 0..24u64 {
        let v = generate_base(seed, 2, 96);
        let r = bilinear_resize_video(&v, 48, 48).unwrap();
        let down = bilinear_resize_video(&r, 12, 12).unwrap();
        let up = bilinear_resize_video(&down, 48, 48).unwrap();
        total += psnr(&up, &r);
        n += 1;
    }
    println!("bilinear 4x down-up baseline: {:.2} dB over {n} clean frames", total / n as f64);
}
