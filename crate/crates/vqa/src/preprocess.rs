//! Two-branch preprocessing: bilinear resize and shared-position random
//! crops. Crop positions are identical across all frames of a video; the
//! per-video candidate set is seeded and recorded for reproducibility.

use rand::Rng as _;

use crate::{Result, VqaError};
use vdq_tensor::rng::rng_from;
use vdq_tensor::Tensor;

/// Bilinear resize with half-pixel sampling of a video [3, N, H, W].
pub fn bilinear_resize_video(video: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, n, h, w) = (
        video.shape()[0],
        video.shape()[1],
        video.shape()[2],
        video.shape()[3],
    );
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    let data = video.data();
    let mut out = vec![0.0; c * n * out_h * out_w];
    let in_plane = h * w;
    let out_plane = out_h * out_w;
    for p in 0..c * n {
        let src = &data[p * in_plane..(p + 1) * in_plane];
        let dst = &mut out[p * out_plane..(p + 1) * out_plane];
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, h as f64 - 1.0);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let wy = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, w as f64 - 1.0);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let wx = fx - x0 as f64;
                let top = src[y0 * w + x0] * (1.0 - wx) + src[y0 * w + x1] * wx;
                let bot = src[y1 * w + x0] * (1.0 - wx) + src[y1 * w + x1] * wx;
                dst[oy * out_w + ox] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    Ok(Tensor::from_vec(out, &[c, n, out_h, out_w]))
}

/// The seeded candidate crop positions for one video; identical positions
/// are used across all frames. With native == crop the only position is
/// (0, 0).
pub fn crop_positions(
    native_h: usize,
    native_w: usize,
    crop: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if crop > native_h || crop > native_w {
        return Err(VqaError::Config(format!(
            "crop {crop} exceeds native {native_h}x{native_w}"
        )));
    }
    let mut rng = rng_from(seed);
    let max_y = native_h - crop;
    let max_x = native_w - crop;
    Ok((0..count)
        .map(|_| {
            (
                if max_y == 0 { 0 } else { rng.random_range(0..=max_y) },
                if max_x == 0 { 0 } else { rng.random_range(0..=max_x) },
            )
        })
        .collect())
}

/// Extracts the same crop window from every frame.
pub fn crop_video(video: &Tensor, pos: (usize, usize), crop: usize) -> Result<Tensor> {
    let cropped = video
        .narrow(2, pos.0, crop)?
        .narrow(3, pos.1, crop)?;
    Ok(cropped)
}

/// Resized branch plus one cropped branch at the chosen candidate index.
pub fn preprocess(
    video: &Tensor,
    crop: usize,
    positions: &[(usize, usize)],
    chosen: usize,
) -> Result<(Tensor, Tensor, (usize, usize))> {
    let resized = bilinear_resize_video(video, crop, crop)?;
    let pos = positions[chosen];
    let cropped = crop_video(video, pos, crop)?;
    Ok((resized, cropped, pos))
}
