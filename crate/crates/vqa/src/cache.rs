//! Disk cache for frozen-extractor outputs.
//!
//! The extractor dominates runtime (ten denoiser passes per frame), so its
//! outputs are computed once per (video, preprocessing unit) and reused by
//! training and inference. Values are stored as f32 ("DVC1" records: magic,
//! u32 rank, u64 dims, f32 payload) and widened back to f64 on load. A cache
//! manifest records the extraction seed and the per-video crop positions so
//! a stale cache cannot be silently reused.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Result, VqaError};
use vdq_tensor::Tensor;

const MAGIC: &[u8; 4] = b"DVC1";

/// One preprocessing unit of a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Resize,
    Crop(usize),
}

impl Unit {
    pub fn file_stem(&self) -> String {
        match self {
            Unit::Resize => "resize".to_string(),
            Unit::Crop(k) => format!("crop{k:02}"),
        }
    }

    /// Stable index used for extraction-seed derivation.
    pub fn index(&self) -> u64 {
        match self {
            Unit::Resize => 0,
            Unit::Crop(k) => 1 + *k as u64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheManifest {
    pub base_seed: u64,
    pub n_videos: usize,
    pub n_crops: usize,
    /// Branch resolution the features were extracted at.
    pub crop: usize,
    /// Per-video candidate crop positions (y, x), shared across frames.
    pub positions: Vec<Vec<(usize, usize)>>,
}

pub struct FeatureCache {
    dir: PathBuf,
    pub manifest: CacheManifest,
}

/// Per-frame extractor outputs for one unit, batched over frames.
pub struct CachedUnit {
    /// [N,32,12,12], [N,64,6,6], [N,128,3,3].
    pub multi_scale: Vec<Tensor>,
    /// [N,4,12,12].
    pub latent: Tensor,
}

fn write_record<W: Write>(w: &mut W, t: &Tensor) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_record<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(VqaError::Cache(format!("bad record magic {magic:?}")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut payload = vec![0u8; numel * 4];
    r.read_exact(&mut payload)?;
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Tensor::from_vec(data, &shape))
}

/// Stacks per-frame extractor outputs into frame-batched tensors:
/// three [N,C,h,w] multi-scale levels plus the [N,4,12,12] latents.
pub fn batch_frame_features(
    features: &[vdq_diffusion::FrameFeatures],
) -> Result<(Vec<Tensor>, Tensor)> {
    assert!(!features.is_empty());
    let levels = features[0].multi_scale.len();
    let mut ms_batched = Vec::with_capacity(levels);
    for level in 0..levels {
        let batched: Vec<Tensor> = features
            .iter()
            .map(|f| {
                let t = &f.multi_scale[level];
                let mut shape = vec![1];
                shape.extend_from_slice(t.shape());
                t.reshape(&shape)
            })
            .collect::<vdq_tensor::Result<_>>()?;
        let refs: Vec<&Tensor> = batched.iter().collect();
        ms_batched.push(Tensor::cat(&refs, 0)?);
    }
    let latents: Vec<Tensor> = features
        .iter()
        .map(|f| {
            let mut shape = vec![1];
            shape.extend_from_slice(f.latent.shape());
            f.latent.reshape(&shape)
        })
        .collect::<vdq_tensor::Result<_>>()?;
    let refs: Vec<&Tensor> = latents.iter().collect();
    Ok((ms_batched, Tensor::cat(&refs, 0)?))
}

impl FeatureCache {
    pub fn create(dir: &Path, manifest: CacheManifest) -> Result<FeatureCache> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| VqaError::Cache(e.to_string()))?;
        fs::write(dir.join("cache_manifest.json"), json)?;
        Ok(FeatureCache {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn open(dir: &Path) -> Result<FeatureCache> {
        let json = fs::read_to_string(dir.join("cache_manifest.json"))?;
        let manifest =
            serde_json::from_str(&json).map_err(|e| VqaError::Cache(e.to_string()))?;
        Ok(FeatureCache {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn unit_path(&self, video: usize, unit: Unit) -> PathBuf {
        self.dir.join(format!("{video:04}_{}.dvc", unit.file_stem()))
    }

    pub fn contains(&self, video: usize, unit: Unit) -> bool {
        self.unit_path(video, unit).exists()
    }

    /// Extraction seed for one unit: derived from the cache base seed, the
    /// video id, and the unit index.
    pub fn extraction_seed(&self, video: usize, unit: Unit) -> u64 {
        vdq_tensor::rng::derive_seed(
            self.manifest.base_seed,
            (video as u64) * 64 + unit.index(),
        )
    }

    pub fn store(
        &self,
        video: usize,
        unit: Unit,
        multi_scale: &[Tensor],
        latent: &Tensor,
    ) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.unit_path(video, unit))?);
        for ms in multi_scale {
            write_record(&mut w, ms)?;
        }
        write_record(&mut w, latent)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(&self, video: usize, unit: Unit) -> Result<CachedUnit> {
        let path = self.unit_path(video, unit);
        let mut r = BufReader::new(fs::File::open(&path).map_err(|e| {
            VqaError::Cache(format!("missing cached features {}: {e}", path.display()))
        })?);
        let ms0 = read_record(&mut r)?;
        let ms1 = read_record(&mut r)?;
        let ms2 = read_record(&mut r)?;
        let latent = read_record(&mut r)?;
        Ok(CachedUnit {
            multi_scale: vec![ms0, ms1, ms2],
            latent,
        })
    }
}
