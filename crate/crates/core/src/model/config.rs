use serde::{Deserialize, Serialize};

use crate::corpus::VersionCorpus;
use crate::error::{Error, Result};
use crate::preprocess::AblationFlags;

/// Hyperparameters and structural switches of the kill predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Per direction; encoded vectors are twice this size.
    pub hidden_dim: usize,
    /// Output width of each of the linear and bilinear comparison units.
    pub compare_dim: usize,
    /// Output width of each reduction feeding the fusion vector.
    pub fusion_dim: usize,
    pub dropout_rate: f64,
    pub max_epochs: usize,
    pub max_len: usize,
    pub min_count: usize,
    pub operator_count: usize,
    pub use_before_after: bool,
    pub ablation: AblationFlags,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 50,
            hidden_dim: 100,
            compare_dim: 16,
            fusion_dim: 64,
            dropout_rate: 0.5,
            max_epochs: 10,
            max_len: 64,
            min_count: 1,
            operator_count: 0,
            use_before_after: true,
            ablation: AblationFlags::default(),
            seed: 7,
            learning_rate: 1e-3,
            batch_size: 256,
            grad_clip: 5.0,
        }
    }
}

impl ModelConfig {
    /// Copies the corpus-derived fields (operator count, before/after use).
    pub fn fitted_to(mut self, corpus: &VersionCorpus) -> Self {
        self.operator_count = corpus.operator_set().len();
        self.use_before_after = corpus.tool_mode().has_before_after();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("compare_dim", self.compare_dim),
            ("fusion_dim", self.fusion_dim),
            ("max_len", self.max_len),
            ("min_count", self.min_count),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::validation("dropout_rate must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.grad_clip.is_nan() || self.grad_clip < 0.0 {
            return Err(Error::validation("grad_clip must be non-negative"));
        }
        Ok(())
    }

    /// Width of an encoded sequence.
    pub fn encoded_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    /// Width of one comparison vector.
    pub fn compare_out_dim(&self) -> usize {
        2 * self.compare_dim + 2 + 2 * self.encoded_dim()
    }

    /// Width of the classifier input.
    pub fn fusion_width(&self) -> usize {
        let branches = if self.use_before_after { 3 } else { 2 };
        branches * self.fusion_dim + self.operator_count
    }
}
