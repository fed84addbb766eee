//! The assembled quality model: independent fusion/refinement/aggregation
//! stacks per branch, optional temporal-coherence token mixers per branch,
//! and the shared score/weight heads.

use crate::config::VqaConfig;
use crate::frame_fusion::FrameFusion;
use crate::fusion::FeatureFusion;
use crate::heads::{QualityPrediction, ScoreHeads};
use crate::temporal_diff::TemporalDiff;
use vdq_diffusion::unet::LEVEL_WIDTHS;
use vdq_diffusion::vae::LATENT_CHANNELS;
use vdq_ssm::TemporalMamba;
use vdq_tensor::nn::{Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor};

/// One branch's inputs: cached extractor features batched over frames plus
/// the branch pixels for the token mixer.
pub struct BranchInput<'a> {
    /// [N,32,12,12], [N,64,6,6], [N,128,3,3].
    pub multi_scale: &'a [Tensor],
    /// [N,4,12,12].
    pub latent: &'a Tensor,
    /// [3,N,crop,crop].
    pub pixels: &'a Tensor,
}

pub struct VqaModel {
    pub cfg: VqaConfig,
    dff_s: FeatureFusion,
    dff_d: FeatureFusion,
    tdm_s: TemporalDiff,
    tdm_d: TemporalDiff,
    fff_s: FrameFusion,
    fff_d: FrameFusion,
    tcab_s: Option<TemporalMamba>,
    tcab_d: Option<TemporalMamba>,
    heads: ScoreHeads,
}

impl VqaModel {
    pub fn new(cfg: VqaConfig, rng: &mut Rng) -> Result<VqaModel> {
        let mk_tcab = |rng: &mut Rng| TemporalMamba::new(cfg.temporal_config(), rng);
        let tcab_s = if cfg.use_temporal { Some(mk_tcab(rng)?) } else { None };
        let tcab_d = if cfg.use_temporal { Some(mk_tcab(rng)?) } else { None };
        Ok(VqaModel {
            dff_s: FeatureFusion::new(LEVEL_WIDTHS, LATENT_CHANNELS, rng),
            dff_d: FeatureFusion::new(LEVEL_WIDTHS, LATENT_CHANNELS, rng),
            tdm_s: TemporalDiff::new(cfg.c_fused, rng),
            tdm_d: TemporalDiff::new(cfg.c_fused, rng),
            fff_s: FrameFusion::new(cfg.frames, cfg.c_fused, cfg.fff_out, rng),
            fff_d: FrameFusion::new(cfg.frames, cfg.c_fused, cfg.fff_out, rng),
            tcab_s,
            tcab_d,
            heads: ScoreHeads::new(cfg.head_in(), cfg.hidden, cfg.frames, cfg.dropout, rng),
            cfg,
        })
    }

    fn branch(
        &self,
        dff: &FeatureFusion,
        tdm: &TemporalDiff,
        fff: &FrameFusion,
        tcab: &Option<TemporalMamba>,
        input: &BranchInput,
    ) -> Result<Tensor> {
        let fused = dff.forward(input.multi_scale, input.latent)?;
        let refined = tdm.forward(&fused)?;
        let agg = fff.forward(&refined)?;
        match tcab {
            Some(t) => {
                let coherence = t.forward(input.pixels)?;
                Tensor::cat(&[&agg, &coherence], 0)
            }
            None => Ok(agg),
        }
    }

    /// Resized-branch (semantic) feature vector.
    pub fn semantic_features(&self, input: &BranchInput) -> Result<Tensor> {
        self.branch(&self.dff_s, &self.tdm_s, &self.fff_s, &self.tcab_s, input)
    }

    /// Cropped-branch (distortion) feature vector.
    pub fn distortion_features(&self, input: &BranchInput) -> Result<Tensor> {
        self.branch(&self.dff_d, &self.tdm_d, &self.fff_d, &self.tcab_d, input)
    }

    pub fn predict(
        &self,
        semantic: &Tensor,
        distortion: &Tensor,
        train: bool,
        rng: &mut Rng,
    ) -> Result<QualityPrediction> {
        self.heads.forward(semantic, distortion, train, rng)
    }

    pub fn forward(
        &self,
        semantic: &BranchInput,
        distortion: &BranchInput,
        train: bool,
        rng: &mut Rng,
    ) -> Result<QualityPrediction> {
        let s = self.semantic_features(semantic)?;
        let d = self.distortion_features(distortion)?;
        self.predict(&s, &d, train, rng)
    }
}

impl Module for VqaModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.dff_s.visit(&format!("{prefix}.dff_s"), f);
        self.dff_d.visit(&format!("{prefix}.dff_d"), f);
        self.tdm_s.visit(&format!("{prefix}.tdm_s"), f);
        self.tdm_d.visit(&format!("{prefix}.tdm_d"), f);
        self.fff_s.visit(&format!("{prefix}.fff_s"), f);
        self.fff_d.visit(&format!("{prefix}.fff_d"), f);
        if let Some(t) = &self.tcab_s {
            t.visit(&format!("{prefix}.tcab_s"), f);
        }
        if let Some(t) = &self.tcab_d {
            t.visit(&format!("{prefix}.tcab_d"), f);
        }
        self.heads.visit(&format!("{prefix}.heads"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.dff_s.visit_mut(&format!("{prefix}.dff_s"), f);
        self.dff_d.visit_mut(&format!("{prefix}.dff_d"), f);
        self.tdm_s.visit_mut(&format!("{prefix}.tdm_s"), f);
        self.tdm_d.visit_mut(&format!("{prefix}.tdm_d"), f);
        self.fff_s.visit_mut(&format!("{prefix}.fff_s"), f);
        self.fff_d.visit_mut(&format!("{prefix}.fff_d"), f);
        if let Some(t) = &mut self.tcab_s {
            t.visit_mut(&format!("{prefix}.tcab_s"), f);
        }
        if let Some(t) = &mut self.tcab_d {
            t.visit_mut(&format!("{prefix}.tcab_d"), f);
        }
        self.heads.visit_mut(&format!("{prefix}.heads"), f);
    }
}
