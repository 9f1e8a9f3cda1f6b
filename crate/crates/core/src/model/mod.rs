//! The view-switch detector and view selector network.
//!
//! Both components share one architecture: token assembly from the
//! [`EncoderBank`], a pre-LN transformer aggregator with learned positional
//! embeddings, and an MLP head over the CLS output. The selector additionally
//! appends candidate ego and exo frame tokens before the CLS token.

mod checkpoint;
mod config;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Sample, SelectorSample, ViewKind, ViewLabel};
use crate::encoder::{CandidateEmbedding, EncoderBank};
use crate::error::{Error, Result};
use crate::nn::{scaled_uniform, xavier_uniform, Grads, Graph, Mat, NodeId, ParamId, ParamStore};
use crate::text::Vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{AggregatorConfig, HeadConfig, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Detector,
    Selector,
}

/// Role of each token in the assembled sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Frame,
    PastNarr,
    NextNarr,
    CandEgo,
    CandExo,
    Cls,
}

/// The input groups fed to the aggregator. Dropped groups are omitted, not zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputMask {
    pub frames: bool,
    pub past_narrations: bool,
    pub next_narration: bool,
    pub candidates: bool,
}

impl Default for InputMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl InputMask {
    pub const ALL: InputMask = InputMask {
        frames: true,
        past_narrations: true,
        next_narration: true,
        candidates: true,
    };

    pub fn only_frames() -> Self {
        Self {
            past_narrations: false,
            next_narration: false,
            ..Self::ALL
        }
    }

    pub fn only_past_narrations() -> Self {
        Self {
            frames: false,
            next_narration: false,
            ..Self::ALL
        }
    }

    pub fn only_next_narration() -> Self {
        Self {
            frames: false,
            past_narrations: false,
            ..Self::ALL
        }
    }

    /// Short tag such as `F+N+N'`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.frames {
            parts.push("F");
        }
        if self.past_narrations {
            parts.push("N");
        }
        if self.next_narration {
            parts.push("N'");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a> {
    Detector(&'a Sample),
    Selector(&'a SelectorSample),
}

impl<'a> ModelInput<'a> {
    pub fn base(&self) -> &'a Sample {
        match self {
            ModelInput::Detector(s) => s,
            ModelInput::Selector(s) => &s.base,
        }
    }
}

impl<'a> From<&'a Sample> for ModelInput<'a> {
    fn from(s: &'a Sample) -> Self {
        ModelInput::Detector(s)
    }
}

impl<'a> From<&'a SelectorSample> for ModelInput<'a> {
    fn from(s: &'a SelectorSample) -> Self {
        ModelInput::Selector(s)
    }
}

/// Assembled aggregator input, before positional embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub vectors: Mat,
    pub roles: Vec<Role>,
    /// Row of the positional table used by each token.
    pub positions: Vec<usize>,
    pub cls_index: usize,
}

/// Two-way output; index 0 is ego, index 1 is exo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: [f64; 2],
    pub probs: [f64; 2],
    pub predicted: ViewLabel,
}

impl Prediction {
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let m = logits[0].max(logits[1]);
        let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
        let z = e[0] + e[1];
        let probs = [e[0] / z, e[1] / z];
        let kind = if probs[0] > probs[1] {
            ViewKind::Ego
        } else {
            ViewKind::Exo
        };
        Self {
            logits,
            probs,
            predicted: ViewLabel::new(kind, probs[kind.index()]),
        }
    }

    /// A hard vote, e.g. from a heuristic baseline.
    pub fn hard(kind: ViewKind) -> Self {
        let mut probs = [0.0; 2];
        probs[kind.index()] = 1.0;
        let mut logits = [-20.0; 2];
        logits[kind.index()] = 20.0;
        Self {
            logits,
            probs,
            predicted: ViewLabel::certain(kind),
        }
    }

    pub fn p_ego(&self) -> f64 {
        self.probs[0]
    }

    pub fn kind(&self) -> ViewKind {
        self.predicted.kind
    }
}

/// Two-class cross-entropy of a prediction against a hard target.
pub fn loss_detector(pred: &Prediction, target: ViewKind) -> f64 {
    let z = pred.logits;
    let m = z[0].max(z[1]);
    m + ((z[0] - m).exp() + (z[1] - m).exp()).ln() - z[target.index()]
}

/// Mean cross-entropy over a batch.
pub fn mean_loss(preds: &[Prediction], targets: &[ViewKind]) -> f64 {
    assert_eq!(preds.len(), targets.len());
    preds
        .iter()
        .zip(targets)
        .map(|(p, &t)| loss_detector(p, t))
        .sum::<f64>()
        / preds.len().max(1) as f64
}

#[derive(Default)]
struct Assembly {
    parts: Vec<NodeId>,
    roles: Vec<Role>,
    positions: Vec<usize>,
    next_pos: usize,
}

impl Assembly {
    /// Base tokens take consecutive positions; candidates and CLS pass their own.
    fn push(&mut self, node: NodeId, n: usize, role: Role, pos: Option<usize>) {
        self.parts.push(node);
        for j in 0..n {
            self.roles.push(role);
            match pos {
                Some(base) => self.positions.push(base + j),
                None => {
                    self.positions.push(self.next_pos);
                    self.next_pos += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerParams {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wqkv: ParamId,
    bqkv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct Aggregator {
    pos: ParamId,
    layers: Vec<LayerParams>,
    final_g: ParamId,
    final_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    layers: Vec<(ParamId, ParamId)>,
}

/// One detector or selector network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchModel {
    pub cfg: ModelConfig,
    pub component: Component,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub bank: EncoderBank,
    agg: Aggregator,
    head: Head,
}

/// Learned-from-scratch tensors get the small init used for embeddings.
const POS_INIT_STD: f64 = 0.02;

impl SwitchModel {
    pub fn new_detector(cfg: ModelConfig, vocab: Vocab) -> Result<Self> {
        Self::build(cfg, vocab, Component::Detector)
    }

    /// A selector initialized from scratch; see [`crate::selector::init_from_detector`]
    /// for the pretrained route.
    pub fn new_selector(cfg: ModelConfig, vocab: Vocab) -> Result<Self> {
        if cfg.aggregator.max_candidate_tokens == 0 {
            return Err(Error::Config(
                "selector needs max_candidate_tokens > 0".into(),
            ));
        }
        Self::build(cfg, vocab, Component::Selector)
    }

    pub(crate) fn build(cfg: ModelConfig, vocab: Vocab, component: Component) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let d = cfg.aggregator.model_dim;
        let bank = EncoderBank::new(&mut store, &cfg.encoder, d, vocab.table_rows(), &mut rng);

        let a = &cfg.aggregator;
        let pos = store.add(
            "agg.pos",
            scaled_uniform(&mut rng, a.positional_rows(), d, POS_INIT_STD),
            true,
            false,
        );
        let mut layers = Vec::with_capacity(a.num_layers);
        for l in 0..a.num_layers {
            let p = |n: &str| format!("agg.l{l}.{n}");
            layers.push(LayerParams {
                ln1_g: store.add(p("ln1_g"), Mat::ones((1, d)), true, false),
                ln1_b: store.add(p("ln1_b"), Mat::zeros((1, d)), true, false),
                wqkv: store.add(p("wqkv"), xavier_uniform(&mut rng, d, 3 * d), true, true),
                bqkv: store.add(p("bqkv"), Mat::zeros((1, 3 * d)), true, false),
                wo: store.add(p("wo"), xavier_uniform(&mut rng, d, d), true, true),
                bo: store.add(p("bo"), Mat::zeros((1, d)), true, false),
                ln2_g: store.add(p("ln2_g"), Mat::ones((1, d)), true, false),
                ln2_b: store.add(p("ln2_b"), Mat::zeros((1, d)), true, false),
                w1: store.add(p("w1"), xavier_uniform(&mut rng, d, a.ffn_dim), true, true),
                b1: store.add(p("b1"), Mat::zeros((1, a.ffn_dim)), true, false),
                w2: store.add(p("w2"), xavier_uniform(&mut rng, a.ffn_dim, d), true, true),
                b2: store.add(p("b2"), Mat::zeros((1, d)), true, false),
            });
        }
        let agg = Aggregator {
            pos,
            layers,
            final_g: store.add("agg.final_g", Mat::ones((1, d)), true, false),
            final_b: store.add("agg.final_b", Mat::zeros((1, d)), true, false),
        };

        let mut dims = vec![d];
        dims.extend(&cfg.head.hidden_dims);
        dims.push(cfg.head.num_classes);
        let head = Head {
            layers: dims
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    (
                        store.add(format!("head.l{i}.w"), xavier_uniform(&mut rng, w[0], w[1]), true, true),
                        store.add(format!("head.l{i}.b"), Mat::zeros((1, w[1])), true, false),
                    )
                })
                .collect(),
        };

        Ok(Self {
            cfg,
            component,
            vocab,
            store,
            bank,
            agg,
            head,
        })
    }

    pub fn model_dim(&self) -> usize {
        self.cfg.aggregator.model_dim
    }

    fn tokens_of(&self, text: &str) -> Vec<usize> {
        let mut ids = self.vocab.encode(text);
        if ids.is_empty() && !text.trim().is_empty() {
            // Punctuation-only speech still counts as narration.
            ids.push(self.vocab.oov());
        }
        ids.truncate(self.cfg.encoder.max_tokens_per_narration);
        ids
    }

    /// Token ids of past narrations under the total-token cap; the oldest are cut first.
    fn past_token_lists(&self, sample: &Sample) -> Result<Vec<Option<Vec<usize>>>> {
        let mut budget = self.cfg.encoder.max_past_tokens;
        let mut out = vec![None; sample.past_narrations.len()];
        for (i, p) in sample.past_narrations.iter().enumerate().rev() {
            if p.segment.text.trim().is_empty() {
                return Err(Error::EmptyNarrationText);
            }
            let mut ids = self.tokens_of(&p.segment.text);
            ids.truncate(budget);
            budget -= ids.len();
            if !ids.is_empty() {
                out[i] = Some(ids);
            }
        }
        Ok(out)
    }

    fn assemble(
        &self,
        g: &mut Graph<'_>,
        input: ModelInput<'_>,
        mask: InputMask,
    ) -> Result<(NodeId, Vec<Role>, Vec<usize>)> {
        let s = input.base();
        let bank = &self.bank;
        let mut seq = Assembly::default();

        let m_f = g.param(bank.modality_frame);
        let m_n = g.param(bank.modality_text);

        if mask.frames && s.past_frame_features.rows() > 0 {
            let views: Vec<ViewKind> = s.past_frame_views.iter().map(|v| v.kind).collect();
            let h = bank.frame_tokens(g, &s.past_frame_features, Some(&views), Some(&s.past_frame_times))?;
            let h = g.add_row(h, m_f);
            seq.push(h, s.past_frame_features.rows(), Role::Frame, None);
        }

        if mask.past_narrations && !s.past_narrations.is_empty() {
            let lists = self.past_token_lists(s)?;
            let mut ids = Vec::new();
            let mut views = Vec::new();
            let mut times = Vec::new();
            for (p, l) in s.past_narrations.iter().zip(lists) {
                if let Some(l) = l {
                    ids.push(l);
                    views.push(p.view.kind);
                    times.push(p.rel_mean_time);
                }
            }
            if !ids.is_empty() {
                let n = ids.len();
                let h = bank.past_narration_tokens(g, &ids, &views, &times)?;
                let h = g.add_row(h, m_n);
                seq.push(h, n, Role::PastNarr, None);
            }
        }

        if mask.next_narration {
            let ids = self.tokens_of(&s.next_narration.text);
            let h = bank.next_narration_token(g, &ids, s.next_narration.rel_mean_time);
            let h = g.add_row(h, m_n);
            seq.push(h, 1, Role::NextNarr, None);
        }

        let base_len = seq.next_pos;
        if base_len + 1 > self.cfg.aggregator.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: base_len + 1,
                max: self.cfg.aggregator.max_seq_len,
            });
        }

        if let ModelInput::Selector(sel) = input {
            if mask.candidates {
                let max_c = self.cfg.aggregator.max_candidate_tokens;
                if self.component != Component::Selector || max_c == 0 {
                    return Err(Error::ConfigMismatch(
                        "candidate tokens need a selector model".into(),
                    ));
                }
                for (kind, feats, role) in [
                    (ViewKind::Ego, &sel.ego_candidate_features, Role::CandEgo),
                    (ViewKind::Exo, &sel.exo_candidate_features, Role::CandExo),
                ] {
                    let n = feats.rows();
                    if n == 0 {
                        return Err(Error::MissingInput(format!("{kind} candidate frames")));
                    }
                    if n > max_c {
                        return Err(Error::SequenceTooLong { len: n, max: max_c });
                    }
                    let views = vec![kind; n];
                    let step = s.delta / n as f64;
                    let times: Vec<f64> =
                        (1..=n).map(|k| s.t - s.anchor_s + k as f64 * step).collect();
                    let (v, t) = match self.cfg.encoder.candidate_embedding {
                        CandidateEmbedding::FrameOnly => (None, None),
                        CandidateEmbedding::WithView => (Some(views.as_slice()), None),
                        CandidateEmbedding::WithViewAndTime => (Some(views.as_slice()), Some(times.as_slice())),
                    };
                    let h = bank.frame_tokens(g, feats, v, t)?;
                    let h = g.add_row(h, m_f);
                    let offset = self.cfg.aggregator.max_seq_len + kind.index() * max_c;
                    seq.push(h, n, role, Some(offset));
                }
            }
        }

        let cls = g.param(bank.cls);
        seq.push(cls, 1, Role::Cls, Some(base_len));
        let tokens = g.concat_rows(&seq.parts);
        Ok((tokens, seq.roles, seq.positions))
    }

    fn layer(&self, g: &mut Graph<'_>, x: NodeId, lp: &LayerParams, only_row: Option<usize>) -> NodeId {
        let a = &self.cfg.aggregator;
        let d = a.model_dim;
        let dh = d / a.num_heads;
        let eps = a.ln_eps;

        let h = g.layer_norm(x, eps);
        let gn = g.param(lp.ln1_g);
        let bn = g.param(lp.ln1_b);
        let h = g.mul_row(h, gn);
        let h = g.add_row(h, bn);
        let w = g.param(lp.wqkv);
        let b = g.param(lp.bqkv);
        let qkv = g.matmul(h, w);
        let qkv = g.add_row(qkv, b);
        let q_src = match only_row {
            Some(r) => g.slice_rows(qkv, r, 1),
            None => qkv,
        };
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(a.num_heads);
        for i in 0..a.num_heads {
            let q = g.slice_cols(q_src, i * dh, dh);
            let k = g.slice_cols(qkv, d + i * dh, dh);
            let v = g.slice_cols(qkv, 2 * d + i * dh, dh);
            let sc = g.matmul_bt(q, k);
            let sc = g.scale(sc, scale);
            let p = g.softmax_rows(sc);
            heads.push(g.matmul(p, v));
        }
        let o = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let wo = g.param(lp.wo);
        let bo = g.param(lp.bo);
        let o = g.matmul(o, wo);
        let o = g.add_row(o, bo);
        let resid = match only_row {
            Some(r) => g.slice_rows(x, r, 1),
            None => x,
        };
        let x = g.add(resid, o);

        let h = g.layer_norm(x, eps);
        let gn = g.param(lp.ln2_g);
        let bn = g.param(lp.ln2_b);
        let h = g.mul_row(h, gn);
        let h = g.add_row(h, bn);
        let w1 = g.param(lp.w1);
        let b1 = g.param(lp.b1);
        let h = g.matmul(h, w1);
        let h = g.add_row(h, b1);
        let h = g.gelu(h);
        let w2 = g.param(lp.w2);
        let b2 = g.param(lp.b2);
        let h = g.matmul(h, w2);
        let h = g.add_row(h, b2);
        g.add(x, h)
    }

    /// Aggregator + head over an assembled sequence; returns the `1 x 2` logits node.
    fn logits_node(&self, g: &mut Graph<'_>, tokens: NodeId, positions: &[usize], cls_index: usize) -> NodeId {
        let pos = g.gather(self.agg.pos, positions);
        let mut x = g.add(tokens, pos);
        let n = self.agg.layers.len();
        if n == 0 {
            x = g.slice_rows(x, cls_index, 1);
        }
        for (l, lp) in self.agg.layers.iter().enumerate() {
            // Only the CLS row of the last layer feeds the head.
            let only = (l + 1 == n).then_some(cls_index);
            x = self.layer(g, x, lp, only);
        }
        let h = g.layer_norm(x, self.cfg.aggregator.ln_eps);
        let fg = g.param(self.agg.final_g);
        let fb = g.param(self.agg.final_b);
        let h = g.mul_row(h, fg);
        let mut z = g.add_row(h, fb);
        let last = self.head.layers.len() - 1;
        for (i, &(w, b)) in self.head.layers.iter().enumerate() {
            let wn = g.param(w);
            let bn = g.param(b);
            z = g.matmul(z, wn);
            z = g.add_row(z, bn);
            if i < last {
                z = g.gelu(z);
            }
        }
        z
    }

    fn forward_node(&self, g: &mut Graph<'_>, input: ModelInput<'_>, mask: InputMask) -> Result<NodeId> {
        let (tokens, roles, positions) = self.assemble(g, input, mask)?;
        Ok(self.logits_node(g, tokens, &positions, roles.len() - 1))
    }

    fn finish(logits: &Mat) -> Result<Prediction> {
        let z = [logits[[0, 0]], logits[[0, 1]]];
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(Prediction::from_logits(z))
    }

    /// Forward pass of the detector (or of the selector over a detector sample).
    pub fn forward(&self, sample: &Sample, mask: InputMask) -> Result<Prediction> {
        self.predict(ModelInput::Detector(sample), mask)
    }

    pub fn predict(&self, input: ModelInput<'_>, mask: InputMask) -> Result<Prediction> {
        let mut g = Graph::new(&self.store);
        let z = self.forward_node(&mut g, input, mask)?;
        Self::finish(g.value(z))
    }

    /// Forward pass over an explicit token sequence, e.g. one with permuted rows.
    pub fn predict_tokens(&self, seq: &TokenSequence) -> Result<Prediction> {
        let mut g = Graph::new(&self.store);
        let t = g.constant(seq.vectors.clone());
        let z = self.logits_node(&mut g, t, &seq.positions, seq.cls_index);
        Self::finish(g.value(z))
    }

    pub fn assemble_tokens(&self, input: ModelInput<'_>, mask: InputMask) -> Result<TokenSequence> {
        let mut g = Graph::new(&self.store);
        let (tokens, roles, positions) = self.assemble(&mut g, input, mask)?;
        Ok(TokenSequence {
            vectors: g.value(tokens).clone(),
            cls_index: roles.len() - 1,
            roles,
            positions,
        })
    }

    /// `E^F(F_i) + E^V(V_i) + E^T(T_i)` for one frame, before the modality vector.
    pub fn encode_frame_token(&self, feature: &[f32], view: ViewKind, rel_time: f64) -> Result<Vec<f64>> {
        let feats = crate::data::FeatureMatrix::new(1, feature.len(), feature.to_vec())?;
        let mut g = Graph::new(&self.store);
        let h = self.bank.frame_tokens(&mut g, &feats, Some(&[view]), Some(&[rel_time]))?;
        Ok(g.value(h).row(0).to_vec())
    }

    pub fn encode_past_narration_token(&self, text: &str, view: ViewKind, rel_mean_time: f64) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyNarrationText);
        }
        let ids = self.tokens_of(text);
        let mut g = Graph::new(&self.store);
        let h = self.bank.past_narration_tokens(&mut g, &[ids], &[view], &[rel_mean_time])?;
        Ok(g.value(h).row(0).to_vec())
    }

    pub fn encode_next_narration_token(&self, text: &str, rel_mean_time: f64) -> Vec<f64> {
        let ids = self.tokens_of(text);
        let mut g = Graph::new(&self.store);
        let h = self.bank.next_narration_token(&mut g, &ids, rel_mean_time);
        g.value(h).row(0).to_vec()
    }

    /// Text feature `E^N(text)` in model space (null row for empty text).
    pub fn text_embedding(&self, text: &str) -> Vec<f64> {
        let ids = self.tokens_of(text);
        let mut g = Graph::new(&self.store);
        let h = if ids.is_empty() {
            g.param(self.bank.null_text)
        } else {
            self.bank.text_features(&mut g, &[ids])
        };
        g.value(h).row(0).to_vec()
    }

    /// Frame features `E^F(F)` in model space, one row per frame.
    pub fn frame_embeddings(&self, feats: &crate::data::FeatureMatrix) -> Result<Mat> {
        let mut g = Graph::new(&self.store);
        let h = self.bank.frame_tokens(&mut g, feats, None, None)?;
        Ok(g.value(h).clone())
    }

    /// Loss of one example plus its gradients, accumulated into `grads` with weight `w`.
    ///
    /// The loss is `CE(target) + alpha * CE(aux)` when an auxiliary target is given.
    pub fn accumulate_gradients(
        &self,
        input: ModelInput<'_>,
        target: ViewKind,
        aux: Option<(ViewKind, f64)>,
        mask: InputMask,
        weight: f64,
        grads: &mut Grads,
    ) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        let logits = self.forward_node(&mut g, input, mask)?;
        let mut loss = g.cross_entropy(logits, target.index());
        if let Some((aux_target, alpha)) = aux {
            let l2 = g.cross_entropy(logits, aux_target.index());
            let l2 = g.scale(l2, alpha);
            loss = g.add(loss, l2);
        }
        let value = g.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let root = g.scale(loss, weight);
        g.backward(root, grads);
        Ok(value)
    }

    /// Loss of one example without gradients.
    pub fn example_loss(
        &self,
        input: ModelInput<'_>,
        target: ViewKind,
        aux: Option<(ViewKind, f64)>,
        mask: InputMask,
    ) -> Result<f64> {
        let pred = self.predict(input, mask)?;
        let mut loss = loss_detector(&pred, target);
        if let Some((a, alpha)) = aux {
            loss += alpha * loss_detector(&pred, a);
        }
        Ok(loss)
    }

    pub fn positional_table(&self) -> ParamId {
        self.agg.pos
    }

    /// Final head layer `(weight, bias)`.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.head.layers.last().unwrap()
    }
}

#[cfg(test)]
mod tests;
