use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

/// Transformer aggregator hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregatorConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    /// Positional rows for frame/narration tokens plus the CLS token.
    pub max_seq_len: usize,
    /// Extra positional rows per candidate stream (selector only, 0 for the detector).
    pub max_candidate_tokens: usize,
    pub ln_eps: f64,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl AggregatorConfig {
    /// 8 layers, 8 heads, 768-d.
    pub fn paper() -> Self {
        Self {
            num_layers: 8,
            num_heads: 8,
            model_dim: 768,
            ffn_dim: 3072,
            max_seq_len: 256,
            max_candidate_tokens: 0,
            ln_eps: 1e-5,
        }
    }

    /// 2 layers, 2 heads, 64-d: trains in seconds on one core.
    pub fn desk() -> Self {
        Self {
            num_layers: 2,
            num_heads: 2,
            model_dim: 64,
            ffn_dim: 128,
            max_seq_len: 128,
            max_candidate_tokens: 0,
            ln_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} must be divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be positive".into()));
        }
        Ok(())
    }

    pub fn positional_rows(&self) -> usize {
        self.max_seq_len + 2 * self.max_candidate_tokens
    }
}

/// View classification head: hidden layers then a 2-way output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256, 64],
            num_classes: 2,
        }
    }
}

impl HeadConfig {
    pub fn desk() -> Self {
        Self {
            hidden_dims: vec![64, 32],
            num_classes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != 2 {
            return Err(Error::Config(format!(
                "num_classes must be 2, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub aggregator: AggregatorConfig,
    pub head: HeadConfig,
    /// Seed of the parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(16)
    }
}

impl ModelConfig {
    pub fn desk(feat_dim: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                feat_dim,
                ..EncoderConfig::default()
            },
            aggregator: AggregatorConfig::desk(),
            head: HeadConfig::desk(),
            seed: 0,
        }
    }

    pub fn paper(feat_dim: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                feat_dim,
                text_dim: 4096,
                ..EncoderConfig::default()
            },
            aggregator: AggregatorConfig::paper(),
            head: HeadConfig::default(),
            seed: 0,
        }
    }

    /// Very small network for finite-difference gradient checks.
    pub fn tiny(feat_dim: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                feat_dim,
                text_dim: 6,
                max_bins: 64,
                ..EncoderConfig::default()
            },
            aggregator: AggregatorConfig {
                num_layers: 2,
                num_heads: 2,
                model_dim: 8,
                ffn_dim: 12,
                max_seq_len: 48,
                max_candidate_tokens: 0,
                ln_eps: 1e-5,
            },
            head: HeadConfig {
                hidden_dims: vec![8, 6],
                num_classes: 2,
            },
            seed: 0,
        }
    }

    /// Same network with positional rows for `per_stream` candidate tokens per view.
    pub fn with_candidates(mut self, per_stream: usize) -> Self {
        self.aggregator.max_candidate_tokens = per_stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.aggregator.validate()?;
        self.head.validate()?;
        if self.encoder.max_bins == 0 || self.encoder.feat_dim == 0 {
            return Err(Error::Config("encoder dims must be positive".into()));
        }
        Ok(())
    }
}
