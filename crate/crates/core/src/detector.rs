//! Pretext training of the view-switch detector and sequence decoding.

use serde::{Deserialize, Serialize};

use crate::data::{extract_sample, Sample, VideoRecord, ViewKind, ViewLabel, ViewSpan, WindowConfig};
use crate::error::{Error, Result};
use crate::model::{InputMask, ModelConfig, Prediction, SwitchModel};
use crate::text::Vocab;
use crate::train::{train, TrainConfig, TrainExample, TrainHistory};

/// Prediction times `t = k * stride` with a full past-frame window and `t + Δ` inside the video.
pub fn sample_times(record: &VideoRecord, window: &WindowConfig, stride_s: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(stride_s > 0.0) {
        return out;
    }
    let mut k = (window.past_frames_s / stride_s - 1e-9).ceil().max(0.0) as usize;
    loop {
        let t = k as f64 * stride_s;
        if t + window.delta_s > record.duration_s + 1e-9 {
            break;
        }
        if t >= window.past_frames_s - 1e-9 {
            out.push(t);
        }
        k += 1;
    }
    out
}

/// Every grid sample of every record, in corpus order.
pub fn build_samples(records: &[VideoRecord], window: &WindowConfig, stride_s: f64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for r in records {
        for t in sample_times(r, window, stride_s) {
            out.push(extract_sample(r, t, window)?);
        }
    }
    Ok(out)
}

/// Vocabulary over every narration in the corpus.
pub fn build_vocab(records: &[VideoRecord]) -> Vocab {
    Vocab::build(records.iter().flat_map(|r| r.narrations.iter().map(|n| n.text.as_str())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub window: WindowConfig,
    /// Spacing of training samples; defaults to one prediction interval.
    pub stride_s: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            stride_s: 2.0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn examples(samples: &[Sample]) -> Vec<TrainExample<'_>> {
    samples.iter().map(|s| TrainExample::new(s, s.target.kind)).collect()
}

/// Train a detector on (pseudo-)labeled records; `val` drives early stopping.
pub fn train_detector(
    train_records: &[VideoRecord],
    val_records: &[VideoRecord],
    cfg: &DetectorConfig,
) -> Result<(SwitchModel, TrainHistory)> {
    let vocab = build_vocab(train_records);
    let mut model_cfg = cfg.model.clone();
    if let Some(r) = train_records.first() {
        model_cfg.encoder.feat_dim = r.feat_dim();
    }
    let mut model = SwitchModel::new_detector(model_cfg, vocab)?;
    let history = train_detector_samples(
        &mut model,
        &build_samples(train_records, &cfg.window, cfg.stride_s)?,
        &build_samples(val_records, &cfg.window, cfg.stride_s)?,
        &cfg.train,
    )?;
    Ok((model, history))
}

/// Train an existing model on prepared samples.
pub fn train_detector_samples(
    model: &mut SwitchModel,
    train_samples: &[Sample],
    val_samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if train_samples.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    train(model, &examples(train_samples), &examples(val_samples), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Past views come from the record's track.
    TeacherForcing,
    /// Past views after the first prediction come from the model itself.
    Autoregressive,
}

/// Replace the track over `[lo, hi)` with `label`, keeping it contiguous.
fn overwrite(track: &[ViewSpan], lo: f64, hi: f64, label: ViewLabel) -> Vec<ViewSpan> {
    let mut out: Vec<ViewSpan> = track
        .iter()
        .filter(|s| s.begin_s < lo)
        .map(|s| ViewSpan {
            end_s: s.end_s.min(lo),
            ..*s
        })
        .collect();
    out.push(ViewSpan {
        begin_s: lo,
        end_s: hi,
        label,
    });
    out.extend(track.iter().filter(|s| s.end_s > hi).map(|s| ViewSpan {
        begin_s: s.begin_s.max(hi),
        ..*s
    }));
    out
}

/// Predict at every grid time of a record.
pub fn predict_sequence(
    model: &SwitchModel,
    record: &VideoRecord,
    window: &WindowConfig,
    stride_s: f64,
    mode: DecodeMode,
    mask: InputMask,
) -> Result<Vec<(f64, Prediction)>> {
    let times = sample_times(record, window, stride_s);
    let mut rec = record.clone();
    if rec.view_track.is_none() {
        if mode == DecodeMode::TeacherForcing {
            return Err(Error::NoViewTrack(record.video_id.clone()));
        }
        // Nothing is known before the first prediction; assume exo.
        rec.view_track = Some(vec![ViewSpan {
            begin_s: 0.0,
            end_s: rec.duration_s,
            label: ViewLabel::certain(ViewKind::Exo),
        }]);
    }
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        let s = extract_sample(&rec, t, window)?;
        let p = model.forward(&s, mask)?;
        if mode == DecodeMode::Autoregressive {
            let hi = (t + window.delta_s).min(rec.duration_s);
            let track = overwrite(rec.view_track.as_ref().unwrap(), t, hi, ViewLabel::certain(p.kind()));
            rec.view_track = Some(track);
        }
        out.push((t, p));
    }
    Ok(out)
}
