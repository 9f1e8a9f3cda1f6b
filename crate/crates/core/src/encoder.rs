//! Token encoders: frame projection, narration text encoder, and the learnable
//! view, temporal, modality and CLS embeddings.
//!
//! Every token is an exact sum of its components, e.g. a past frame is
//! `E^F(F_i) + E^V(V_i) + E^T(bin(T_i))`, and the modality vector is added
//! when the sequence is assembled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, ViewKind};
use crate::error::{Error, Result};
use crate::nn::{scaled_uniform, xavier_uniform, Graph, Mat, NodeId, ParamId, ParamStore};

/// Which extra embeddings the selector's candidate frame tokens receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateEmbedding {
    FrameOnly,
    WithView,
    WithViewAndTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub feat_dim: usize,
    /// Width of the frozen token table feeding the text projection.
    pub text_dim: usize,
    pub bin_size_s: f64,
    pub max_bins: usize,
    pub candidate_embedding: CandidateEmbedding,
    pub max_tokens_per_narration: usize,
    pub max_past_tokens: usize,
    /// Unfreeze the base token table (it is frozen like a pretrained text encoder by default).
    pub train_text_table: bool,
    /// Standard deviation of the uniform init for embedding tables.
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feat_dim: 16,
            // Wide enough that a ~100-word vocabulary gets near-orthogonal rows.
            text_dim: 128,
            bin_size_s: 0.1,
            // (32 s past narrations + 2 s prediction interval) / 0.1 s
            max_bins: 340,
            candidate_embedding: CandidateEmbedding::FrameOnly,
            max_tokens_per_narration: 512,
            max_past_tokens: 1024,
            train_text_table: false,
            init_std: 0.02,
        }
    }
}

/// `floor(rel_time / bin)`, clamped into the table.
pub fn temporal_bin(rel_time: f64, bin_size_s: f64, max_bins: usize) -> usize {
    if !(rel_time > 0.0) {
        return 0;
    }
    let b = (rel_time / bin_size_s + 1e-9).floor() as usize;
    b.min(max_bins - 1)
}

/// Parameter handles of every encoder and embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBank {
    pub cfg: EncoderConfig,
    pub model_dim: usize,
    pub frame_w: ParamId,
    pub frame_b: ParamId,
    pub text_table: ParamId,
    pub text_w: ParamId,
    pub text_b: ParamId,
    pub null_text: ParamId,
    pub view_table: ParamId,
    pub temporal_table: ParamId,
    pub modality_frame: ParamId,
    pub modality_text: ParamId,
    pub cls: ParamId,
}

impl EncoderBank {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &EncoderConfig,
        model_dim: usize,
        vocab_rows: usize,
        rng: &mut R,
    ) -> Self {
        let d = model_dim;
        let std = cfg.init_std;
        // The frozen token table stands in for a pretrained text encoder, so it
        // gets unit-scale rows rather than the small init of learned tables.
        let text_table = scaled_uniform(rng, vocab_rows, cfg.text_dim, 1.0);
        Self {
            cfg: cfg.clone(),
            model_dim: d,
            frame_w: store.add("enc.frame_w", xavier_uniform(rng, cfg.feat_dim, d), true, true),
            frame_b: store.add("enc.frame_b", Mat::zeros((1, d)), true, false),
            text_table: store.add("enc.text_table", text_table, cfg.train_text_table, false),
            text_w: store.add("enc.text_w", xavier_uniform(rng, cfg.text_dim, d), true, true),
            text_b: store.add("enc.text_b", Mat::zeros((1, d)), true, false),
            null_text: store.add("enc.null_text", scaled_uniform(rng, 1, d, std), true, false),
            view_table: store.add("enc.view_table", scaled_uniform(rng, 2, d, std), true, false),
            temporal_table: store.add(
                "enc.temporal_table",
                scaled_uniform(rng, cfg.max_bins, d, std),
                true,
                false,
            ),
            modality_frame: store.add("enc.modality_frame", scaled_uniform(rng, 1, d, std), true, false),
            modality_text: store.add("enc.modality_text", scaled_uniform(rng, 1, d, std), true, false),
            cls: store.add("enc.cls", scaled_uniform(rng, 1, d, std), true, false),
        }
    }

    pub fn bin(&self, rel_time: f64) -> usize {
        temporal_bin(rel_time, self.cfg.bin_size_s, self.cfg.max_bins)
    }

    /// `E^F(F)` for each row, plus optional view and temporal embeddings.
    pub fn frame_tokens(
        &self,
        g: &mut Graph<'_>,
        feats: &FeatureMatrix,
        views: Option<&[ViewKind]>,
        times: Option<&[f64]>,
    ) -> Result<NodeId> {
        if feats.dim() != self.cfg.feat_dim {
            return Err(Error::DimMismatch {
                expected: self.cfg.feat_dim,
                got: feats.dim(),
            });
        }
        let x = Mat::from_shape_fn((feats.rows(), feats.dim()), |(r, c)| feats.row(r)[c] as f64);
        let x = g.constant(x);
        let w = g.param(self.frame_w);
        let b = g.param(self.frame_b);
        let h = g.matmul(x, w);
        let mut h = g.add_row(h, b);
        if let Some(views) = views {
            let idx: Vec<usize> = views.iter().map(|v| v.index()).collect();
            let v = g.gather(self.view_table, &idx);
            h = g.add(h, v);
        }
        if let Some(times) = times {
            let idx: Vec<usize> = times.iter().map(|&t| self.bin(t)).collect();
            let tt = g.gather(self.temporal_table, &idx);
            h = g.add(h, tt);
        }
        Ok(h)
    }

    /// `E^N` for a batch of non-empty token-id lists: mean-pooled base rows, projected.
    pub fn text_features(&self, g: &mut Graph<'_>, token_lists: &[Vec<usize>]) -> NodeId {
        let pooled = if self.cfg.train_text_table {
            let rows: Vec<NodeId> = token_lists
                .iter()
                .map(|ids| {
                    let e = g.gather(self.text_table, ids);
                    g.mean_rows(e)
                })
                .collect();
            g.concat_rows(&rows)
        } else {
            let table = g.store().value(self.text_table);
            let mut m = Mat::zeros((token_lists.len(), self.cfg.text_dim));
            for (r, ids) in token_lists.iter().enumerate() {
                let mut row = m.row_mut(r);
                for &i in ids {
                    row += &table.row(i);
                }
                row /= ids.len() as f64;
            }
            g.constant(m)
        };
        let w = g.param(self.text_w);
        let b = g.param(self.text_b);
        let h = g.matmul(pooled, w);
        g.add_row(h, b)
    }

    /// Past narration tokens: text + view + temporal embedding.
    pub fn past_narration_tokens(
        &self,
        g: &mut Graph<'_>,
        token_lists: &[Vec<usize>],
        views: &[ViewKind],
        rel_times: &[f64],
    ) -> Result<NodeId> {
        if token_lists.iter().any(Vec::is_empty) {
            return Err(Error::EmptyNarrationText);
        }
        let h = self.text_features(g, token_lists);
        let vidx: Vec<usize> = views.iter().map(|v| v.index()).collect();
        let v = g.gather(self.view_table, &vidx);
        let h = g.add(h, v);
        let tidx: Vec<usize> = rel_times.iter().map(|&t| self.bin(t)).collect();
        let t = g.gather(self.temporal_table, &tidx);
        Ok(g.add(h, t))
    }

    /// Next narration token: text (or the learned null-text row) + temporal embedding, no view.
    pub fn next_narration_token(&self, g: &mut Graph<'_>, tokens: &[usize], rel_time: f64) -> NodeId {
        let h = if tokens.is_empty() {
            g.param(self.null_text)
        } else {
            self.text_features(g, &[tokens.to_vec()])
        };
        let t = g.gather(self.temporal_table, &[self.bin(rel_time)]);
        g.add(h, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_examples() {
        assert_eq!(temporal_bin(3.27, 0.1, 340), 32);
        assert_eq!(temporal_bin(1.00, 0.1, 340), temporal_bin(1.05, 0.1, 340));
        assert_eq!(temporal_bin(1.04, 0.1, 340), 10);
        assert_eq!(temporal_bin(1.16, 0.1, 340), 11);
        assert_eq!(temporal_bin(0.3, 0.1, 340), 3);
        assert_eq!(temporal_bin(-2.0, 0.1, 340), 0);
        assert_eq!(temporal_bin(1e6, 0.1, 340), 339);
    }

    proptest::proptest! {
        #[test]
        fn binning_is_monotone(a in -5.0f64..50.0, b in -5.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(temporal_bin(lo, 0.1, 340) <= temporal_bin(hi, 0.1, 340));
        }
    }
}
