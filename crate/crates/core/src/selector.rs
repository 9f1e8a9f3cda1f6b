//! The view selector: detector backbone plus candidate ego/exo frames,
//! fine-tuned on a small human-labeled set.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{extract_selector_sample, SelectorSample, VideoRecord, ViewKind, ViewLabel, WindowConfig};
use crate::error::{Error, Result};
use crate::model::{Component, InputMask, ModelConfig, ModelInput, SwitchModel};
use crate::nn::{scaled_uniform, Grads};
use crate::text::tokenize;
use crate::train::{train, TrainConfig, TrainExample, TrainHistory};

/// One line of a limited-label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelLine {
    pub video_id: String,
    pub t: f64,
    pub target_kind: ViewKind,
}

/// Human best-view labels joined with their selector samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LimitedLabelSet {
    pub samples: Vec<SelectorSample>,
}

impl LimitedLabelSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn video_ids(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.base.video_id.as_str()).collect()
    }

    /// Join label lines against multi-view records.
    pub fn from_lines(lines: &[LabelLine], records: &[VideoRecord], window: &WindowConfig) -> Result<Self> {
        let by_id: HashMap<&str, &VideoRecord> = records.iter().map(|r| (r.video_id.as_str(), r)).collect();
        let samples = lines
            .iter()
            .map(|l| {
                let r = by_id.get(l.video_id.as_str()).ok_or_else(|| Error::Validation {
                    video_id: l.video_id.clone(),
                    message: "label refers to a video missing from the manifest".into(),
                })?;
                let mut s = extract_selector_sample(r, l.t, window)?;
                s.base = s.base.with_target(ViewLabel::certain(l.target_kind));
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    pub fn load_jsonl(path: &Path, records: &[VideoRecord], window: &WindowConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<LabelLine>>>()?;
        Self::from_lines(&lines, records, window)
    }

    pub fn to_lines(&self) -> Vec<LabelLine> {
        self.samples
            .iter()
            .map(|s| LabelLine {
                video_id: s.base.video_id.clone(),
                t: s.base.t,
                target_kind: s.base.target.kind,
            })
            .collect()
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for l in self.to_lines() {
            out.push_str(&serde_json::to_string(&l)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Train and test must not share videos.
    pub fn check_disjoint(&self, other: &LimitedLabelSet) -> Result<()> {
        let a = self.video_ids();
        if let Some(shared) = other.video_ids().into_iter().find(|v| a.contains(v)) {
            return Err(Error::Validation {
                video_id: shared.to_string(),
                message: "video appears in both train and test labels".into(),
            });
        }
        Ok(())
    }

    /// `n` samples, stratified by same-view / view-switch in proportion; all of them if `n >= len`.
    pub fn subsample(&self, n: usize, seed: u64) -> Self {
        if n >= self.len() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut sw, mut same): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&i| self.samples[i].base.is_switch());
        sw.shuffle(&mut rng);
        same.shuffle(&mut rng);
        let n_sw = ((n as f64) * sw.len() as f64 / self.len() as f64).round() as usize;
        let n_sw = n_sw.min(sw.len()).min(n);
        let n_same = (n - n_sw).min(same.len());
        let mut pick: Vec<usize> = sw[..n_sw].iter().chain(&same[..n_same]).copied().collect();
        pick.sort_unstable();
        Self {
            samples: pick.into_iter().map(|i| self.samples[i].clone()).collect(),
        }
    }
}

/// Keyword rules standing in for a narration-based view labeler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeywordLabeler {
    /// Phrases (token sequences) that suggest an ego view; checked first.
    pub ego_phrases: Vec<String>,
    /// Phrases that suggest an exo view.
    pub exo_phrases: Vec<String>,
    pub default: ViewKind,
}

impl Default for KeywordLabeler {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            ego_phrases: s(&["closer look", "close up", "closer", "zoom", "detail", "carefully"]),
            exo_phrases: s(&["i", "we", "my", "our", "i'm", "i'll", "we're", "wide", "overview", "whole"]),
            default: ViewKind::Exo,
        }
    }
}

fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let p = tokenize(phrase);
    !p.is_empty() && tokens.windows(p.len()).any(|w| w == p.as_slice())
}

impl KeywordLabeler {
    pub fn label(&self, text: &str) -> ViewLabel {
        let toks = tokenize(text);
        if self.ego_phrases.iter().any(|p| contains_phrase(&toks, p)) {
            ViewLabel::certain(ViewKind::Ego)
        } else if self.exo_phrases.iter().any(|p| contains_phrase(&toks, p)) {
            ViewLabel::certain(ViewKind::Exo)
        } else {
            ViewLabel::certain(self.default)
        }
    }
}

/// View suggested by the next narration under the default keyword rules.
pub fn narration_pseudo_label(text: &str) -> ViewLabel {
    KeywordLabeler::default().label(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointFinetuneConfig {
    pub alpha: f64,
    pub labeler: KeywordLabeler,
}

impl Default for JointFinetuneConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            labeler: KeywordLabeler::default(),
        }
    }
}

impl JointFinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        Ok(())
    }

    fn aux_for(&self, s: &SelectorSample) -> (ViewKind, f64) {
        (self.labeler.label(&s.base.next_narration.text).kind, self.alpha)
    }
}

/// Selector whose shared tensors are copied from `detector`; extra positional rows are fresh.
pub fn init_from_detector(detector: &SwitchModel, cfg: ModelConfig) -> Result<SwitchModel> {
    let d = &detector.cfg;
    if d.aggregator.model_dim != cfg.aggregator.model_dim
        || d.aggregator.num_layers != cfg.aggregator.num_layers
        || d.aggregator.ffn_dim != cfg.aggregator.ffn_dim
        || d.head != cfg.head
        || d.encoder.feat_dim != cfg.encoder.feat_dim
        || d.encoder.text_dim != cfg.encoder.text_dim
    {
        return Err(Error::ConfigMismatch("selector and detector architectures differ".into()));
    }
    let mut sel = SwitchModel::new_selector(cfg, detector.vocab.clone())?;
    let pos = sel.positional_table();
    for (_, p) in detector.store.iter() {
        let id = sel
            .store
            .id(&p.name)
            .ok_or_else(|| Error::ConfigMismatch(format!("selector has no tensor {}", p.name)))?;
        let dst = sel.store.value_mut(id);
        if dst.dim() == p.value.dim() {
            dst.assign(&p.value);
        } else if id == pos && dst.ncols() == p.value.ncols() && dst.nrows() >= p.value.nrows() {
            dst.slice_mut(ndarray::s![..p.value.nrows(), ..]).assign(&p.value);
        } else {
            return Err(Error::ConfigMismatch(format!(
                "tensor {} has shape {:?} in the detector and {:?} in the selector",
                p.name,
                p.value.dim(),
                dst.dim()
            )));
        }
    }
    Ok(sel)
}

/// Fresh selector from scratch, the "without pretraining" route.
pub fn selector_from_scratch(cfg: ModelConfig, vocab: crate::text::Vocab) -> Result<SwitchModel> {
    SwitchModel::new_selector(cfg, vocab)
}

fn examples<'a>(set: &'a LimitedLabelSet, joint: Option<&JointFinetuneConfig>) -> Vec<TrainExample<'a>> {
    set.samples
        .iter()
        .map(|s| TrainExample {
            input: ModelInput::Selector(s),
            target: s.base.target.kind,
            aux: joint.filter(|j| j.alpha > 0.0).map(|j| j.aux_for(s)),
        })
        .collect()
}

/// Fine-tune in place on limited labels; the frozen token table is never touched.
pub fn finetune_selector(
    model: &mut SwitchModel,
    labels: &LimitedLabelSet,
    val: Option<&LimitedLabelSet>,
    cfg: &TrainConfig,
    joint: Option<&JointFinetuneConfig>,
) -> Result<TrainHistory> {
    if model.component != Component::Selector {
        return Err(Error::ConfigMismatch("fine-tuning needs a selector model".into()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    if let Some(j) = joint {
        j.validate()?;
    }
    if let Some(v) = val {
        labels.check_disjoint(v)?;
    }
    let tr = examples(labels, joint);
    let va = val.map(|v| examples(v, None)).unwrap_or_default();
    train(model, &tr, &va, cfg)
}

/// Loss terms of one batch: `(joint, plain, narration)`, each a batch mean.
///
/// `joint` comes from the differentiable graph; the other two from plain forward passes.
pub fn selector_batch_losses(
    model: &SwitchModel,
    batch: &[SelectorSample],
    joint: &JointFinetuneConfig,
) -> Result<(f64, f64, f64)> {
    let mut grads = Grads::zeros_like(&model.store);
    let n = batch.len().max(1) as f64;
    let (mut lj, mut lp, mut ln) = (0.0, 0.0, 0.0);
    for s in batch {
        let input = ModelInput::Selector(s);
        let target = s.base.target.kind;
        let aux = (joint.alpha > 0.0).then(|| joint.aux_for(s));
        lj += model.accumulate_gradients(input, target, aux, InputMask::ALL, 1.0 / n, &mut grads)?;
        lp += model.example_loss(input, target, None, InputMask::ALL)?;
        ln += model.example_loss(input, joint.aux_for(s).0, None, InputMask::ALL)?;
    }
    Ok((lj / n, lp / n, ln / n))
}

/// Re-initialize candidate positional rows, e.g. after loading a detector with more rows.
pub fn reset_candidate_positions(model: &mut SwitchModel, seed: u64) {
    let a = &model.cfg.aggregator;
    let (start, rows, d) = (a.max_seq_len, 2 * a.max_candidate_tokens, a.model_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fresh = scaled_uniform(&mut rng, rows, d, 0.02);
    let pos = model.positional_table();
    model
        .store
        .value_mut(pos)
        .slice_mut(ndarray::s![start..start + rows, ..])
        .assign(&fresh);
}
