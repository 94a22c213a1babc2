//! One resolved configuration drives a whole run: data handling, model
//! geometry, training, evaluation, and synthetic generation. Unknown keys
//! are rejected, and a run directory always stores the resolved snapshot.

use serde::{Deserialize, Serialize};

use crate::pipeline::IngestConfig;
use crate::synth::GeneratorConfig;
use crate::{CoreError, Result};

/// Which news text feeds the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NewsMode {
    TitleBody,
    TitleOnly,
    BodyOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub word_emb_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Hidden width of the additive attention scorers; 0 means d_model.
    pub attn_hidden_dim: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub news_mode: NewsMode,
    pub word_attention: bool,
    pub news_attention: bool,
    pub interactive: bool,
    /// Reproduces the title-side interactive attention in its published
    /// duplicated form (title query over body words) instead of the
    /// body-as-query form described in prose.
    pub literal_interactive_title: bool,
    /// Share Transformer and attention parameters between the positive and
    /// negative views instead of keeping per-view sets.
    pub share_view_params: bool,
    /// Disable the negative view entirely: the basic variant. All clicks
    /// are routed to the positive view and the score reduces to w_p·ŷ_p.
    pub negative_view: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            word_emb_dim: 300,
            heads: 8,
            head_dim: 32,
            attn_hidden_dim: 0,
            blocks: 1,
            dropout: 0.2,
            news_mode: NewsMode::TitleBody,
            word_attention: true,
            news_attention: true,
            interactive: true,
            literal_interactive_title: false,
            share_view_params: false,
            negative_view: true,
        }
    }
}

impl ModelSection {
    pub fn d_model(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn attn_dim(&self) -> usize {
        if self.attn_hidden_dim == 0 {
            self.d_model()
        } else {
            self.attn_hidden_dim
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Early-stop patience in epochs without a validation AUC improvement;
    /// 0 disables early stopping.
    pub patience: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub threads: usize,
    pub precision: Precision,
    /// Re-draw each sample's negatives every epoch instead of once at
    /// dataset build.
    pub redraw_negatives_per_epoch: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 30,
            learning_rate: 1e-4,
            epochs: 10,
            patience: 2,
            grad_clip: 5.0,
            seed: 0,
            threads: 2,
            precision: Precision::F32,
            redraw_negatives_per_epoch: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Independent seeds per experiment in suites and reports.
    pub r_seeds: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { r_seeds: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: IngestConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub gen: GeneratorConfig,
}

impl RunConfig {
    /// Desk-scale preset: small dims (4 heads × 16), short bodies, smaller
    /// history caps, and a learning rate suited to few epochs.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.model.word_emb_dim = 64;
        cfg.model.heads = 4;
        cfg.model.head_dim = 16;
        cfg.data.title_len = 16;
        cfg.data.body_len = 48;
        cfg.data.pos_cap = 30;
        cfg.data.neg_cap = 15;
        cfg.train.learning_rate = 1e-3;
        cfg.train.epochs = 4;
        cfg.train.patience = 2;
        cfg
    }

    /// Benchmark preset: the configuration the synthetic-benchmark claims
    /// are measured on. Geometry trimmed for wall-clock budget.
    pub fn bench() -> Self {
        let mut cfg = Self::desk();
        cfg.model.word_emb_dim = 16;
        cfg.model.heads = 2;
        cfg.model.head_dim = 8;
        cfg.data.title_len = 12;
        cfg.data.body_len = 16;
        cfg.data.pos_cap = 10;
        cfg.data.neg_cap = 5;
        cfg.train.learning_rate = 3e-3;
        cfg.train.epochs = 3;
        cfg.train.patience = 0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.heads == 0 || m.head_dim == 0 || m.blocks == 0 || m.word_emb_dim == 0 {
            return Err(CoreError::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return Err(CoreError::Config(format!("dropout {} outside [0,1)", m.dropout)));
        }
        if self.data.neg_ratio == 0 {
            return Err(CoreError::Config("neg_ratio (Q) must be at least 1".into()));
        }
        if self.train.batch_size == 0 {
            return Err(CoreError::Config("batch_size must be at least 1".into()));
        }
        if self.train.threads == 0 {
            return Err(CoreError::Config("threads must be at least 1".into()));
        }
        if self.data.title_len == 0 {
            return Err(CoreError::Config("title_len must be positive".into()));
        }
        if self.data.threshold_seconds < 0.0 {
            return Err(CoreError::Config("threshold_seconds must be nonnegative".into()));
        }
        self.gen.validate()?;
        Ok(())
    }
}
