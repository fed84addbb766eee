use serde::{Deserialize, Serialize};
use vdq_ssm::{MambaConfig, TemporalConfig};

/// Geometry and head configuration. The fused width 96 decomposes as
/// 32 + 32 + 28 adjusted multi-scale channels plus the 4 latent channels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaConfig {
    /// Frames per video.
    pub frames: usize,
    /// Native corpus resolution.
    pub native: usize,
    /// Branch resolution (resize target and crop size).
    pub crop: usize,
    /// Inference crop count; training samples one of these.
    pub n_crops: usize,
    /// Channels after feature fusion.
    pub c_fused: usize,
    /// Frame-aggregate feature width.
    pub fff_out: usize,
    /// Hidden width of the score/weight MLPs.
    pub hidden: usize,
    pub dropout: f64,
    /// Temporal-coherence blocks on/off (ablation switch).
    pub use_temporal: bool,
    /// Token embedding width of the temporal blocks.
    pub c_emb: usize,
}

impl Default for VqaConfig {
    fn default() -> Self {
        VqaConfig {
            frames: 8,
            native: 96,
            crop: 48,
            n_crops: 20,
            c_fused: 96,
            fff_out: 32,
            hidden: 64,
            dropout: 0.1,
            use_temporal: true,
            c_emb: 64,
        }
    }
}

impl VqaConfig {
    pub fn temporal_config(&self) -> TemporalConfig {
        TemporalConfig {
            mamba: MambaConfig {
                c_emb: self.c_emb,
                ..MambaConfig::default()
            },
            frames: self.frames,
            height: self.crop,
            width: self.crop,
            patch: 16,
            depth: 2,
        }
    }

    /// Input width of the score/weight MLPs.
    pub fn head_in(&self) -> usize {
        if self.use_temporal {
            self.fff_out + self.c_emb
        } else {
            self.fff_out
        }
    }
}
