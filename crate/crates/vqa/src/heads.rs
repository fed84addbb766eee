//! Final score prediction: the resized-branch features drive a weight MLP
//! (softmax-normalized so the video score is a convex combination), the
//! cropped-branch features drive a score MLP, and the video score is the
//! weighted sum of per-frame scores.

use vdq_tensor::nn::{Dropout, Linear, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor};

pub struct QualityPrediction {
    /// Per-frame scores [N].
    pub scores: Tensor,
    /// Softmax-normalized per-frame weights [N].
    pub weights: Tensor,
    /// Weighted video score (scalar tensor; keeps the graph for training).
    pub q_hat: Tensor,
}

impl QualityPrediction {
    pub fn value(&self) -> f64 {
        self.q_hat.item()
    }

    /// Checks the structural invariants: weights sum to one, q_hat equals
    /// the weighted sum, and q_hat lies inside the score range.
    pub fn validate(&self) -> bool {
        let wsum: f64 = self.weights.data().iter().sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return false;
        }
        if self.weights.data().iter().any(|&w| w < 0.0) {
            return false;
        }
        let dot: f64 = self
            .weights
            .data()
            .iter()
            .zip(self.scores.data().iter())
            .map(|(w, s)| w * s)
            .sum();
        if (dot - self.value()).abs() > 1e-9 {
            return false;
        }
        let min = self.scores.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self
            .scores
            .data()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        self.value() >= min - 1e-9 && self.value() <= max + 1e-9
    }
}

struct Mlp {
    l1: Linear,
    drop: Dropout,
    l2: Linear,
}

impl Mlp {
    fn new(d_in: usize, hidden: usize, d_out: usize, dropout: f64, rng: &mut Rng) -> Mlp {
        Mlp {
            l1: Linear::new(d_in, hidden, true, rng),
            drop: Dropout::new(dropout),
            l2: Linear::new(hidden, d_out, true, rng),
        }
    }

    fn forward(&self, x: &Tensor, train: bool, rng: &mut Rng) -> Result<Tensor> {
        let h = self.l1.forward(x)?.silu()?;
        let h = self.drop.forward(&h, train, rng)?;
        self.l2.forward(&h)
    }
}

impl Module for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.l1.visit(&format!("{prefix}.l1"), f);
        self.l2.visit(&format!("{prefix}.l2"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.l1.visit_mut(&format!("{prefix}.l1"), f);
        self.l2.visit_mut(&format!("{prefix}.l2"), f);
    }
}

pub struct ScoreHeads {
    weight_mlp: Mlp,
    score_mlp: Mlp,
    frames: usize,
}

impl ScoreHeads {
    pub fn new(d_in: usize, hidden: usize, frames: usize, dropout: f64, rng: &mut Rng) -> ScoreHeads {
        let weight_mlp = Mlp::new(d_in, hidden, frames, dropout, rng);
        let mut score_mlp = Mlp::new(d_in, hidden, frames, dropout, rng);
        // start scores mid-range on the [1, 5] opinion scale
        score_mlp
            .l2
            .bias
            .as_mut()
            .unwrap()
            .set_value(Tensor::full(&[frames], 3.0));
        ScoreHeads {
            weight_mlp,
            score_mlp,
            frames,
        }
    }

    /// Semantic-branch features produce the weights; distortion-branch
    /// features produce the scores.
    pub fn forward(
        &self,
        semantic: &Tensor,
        distortion: &Tensor,
        train: bool,
        rng: &mut Rng,
    ) -> Result<QualityPrediction> {
        let s_in = semantic.reshape(&[1, semantic.len()])?;
        let d_in = distortion.reshape(&[1, distortion.len()])?;
        let logits = self.weight_mlp.forward(&s_in, train, rng)?;
        let weights = logits.softmax(1)?.reshape(&[self.frames])?;
        let scores = self
            .score_mlp
            .forward(&d_in, train, rng)?
            .reshape(&[self.frames])?;
        let q_hat = weights.mul(&scores)?.sum_all()?;
        Ok(QualityPrediction {
            scores,
            weights,
            q_hat,
        })
    }
}

impl Module for ScoreHeads {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.weight_mlp.visit(&format!("{prefix}.weight_mlp"), f);
        self.score_mlp.visit(&format!("{prefix}.score_mlp"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.weight_mlp.visit_mut(&format!("{prefix}.weight_mlp"), f);
        self.score_mlp.visit_mut(&format!("{prefix}.score_mlp"), f);
    }
}

/// L1 training loss |q_hat - q| (subgradient 0 at the kink).
pub fn vqa_loss(prediction: &QualityPrediction, mos: f64) -> Result<Tensor> {
    prediction.q_hat.add_scalar(-mos)?.abs()
}
