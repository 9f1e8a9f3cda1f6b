//! Shot-level ego/exo pseudo-labeling of varying-view videos.
//!
//! A content-based detector splits the video into shots, a pluggable clip
//! classifier scores fixed-length clips, and every frame inherits the mean
//! clip probability of its shot.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, VideoRecord, ViewKind, ViewLabel, ViewSpan, TIME_EPS};
use crate::error::{Error, Result};

/// A contiguous run of frames handed to a [`ClipClassifier`].
#[derive(Debug, Clone, Copy)]
pub struct ClipInput<'a> {
    pub video_id: &'a str,
    pub begin_s: f64,
    pub end_s: f64,
    pub features: &'a FeatureMatrix,
}

/// Ego-probability scorer for fixed-length clips.
pub trait ClipClassifier: Send + Sync {
    fn clip_len_s(&self) -> f64 {
        2.0
    }

    /// Probability that the clip shows an ego view, in `[0, 1]`.
    fn classify(&self, clip: &ClipInput<'_>) -> f64;

    /// Whether [`classify`](Self::classify) may run on several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelMode {
    #[serde(alias = "shot", alias = "SHOT_LEVEL")]
    ShotLevel,
    #[serde(alias = "clip", alias = "CLIP_LEVEL")]
    ClipLevel,
}

impl std::str::FromStr for PseudoLabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shot" | "shot_level" => Ok(Self::ShotLevel),
            "clip" | "clip_level" => Ok(Self::ClipLevel),
            _ => Err(Error::Config(format!("unknown pseudo-label mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShotConfig {
    /// Mean absolute difference of normalized features above which a cut is placed.
    pub threshold: f64,
    pub min_shot_len_s: f64,
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self {
            threshold: 0.25,
            min_shot_len_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub begin_s: f64,
    pub end_s: f64,
    /// Ego probability of each clip.
    pub clip_probs: Vec<f64>,
    pub label: ViewLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub video_id: String,
    pub mode: PseudoLabelMode,
    pub shots: Vec<Shot>,
    pub frame_labels: Vec<ViewLabel>,
}

/// Map a mean ego probability to a label; exactly 0.5 goes to exo.
pub fn label_from_ego_prob(p: f64) -> ViewLabel {
    if p > 0.5 {
        ViewLabel::new(ViewKind::Ego, p)
    } else {
        ViewLabel::new(ViewKind::Exo, 1.0 - p)
    }
}

/// Per-transition distance: mean absolute difference of min-max normalized features.
pub fn frame_distances(features: &FeatureMatrix) -> Vec<f64> {
    let (n, d) = (features.rows(), features.dim());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for (k, &v) in features.row(i).iter().enumerate() {
            lo[k] = lo[k].min(v as f64);
            hi[k] = hi[k].max(v as f64);
        }
    }
    (1..n)
        .map(|i| {
            let (a, b) = (features.row(i - 1), features.row(i));
            let mut s = 0.0;
            for k in 0..d {
                let range = hi[k] - lo[k];
                if range > 0.0 {
                    s += (b[k] as f64 - a[k] as f64).abs() / range;
                }
            }
            s / d as f64
        })
        .collect()
}

/// Split a record into shots. Cuts closer than `min_shot_len_s` to the previous
/// kept cut (or to the video start or end) are dropped, earliest first.
pub fn detect_shots(record: &VideoRecord, cfg: &ShotConfig) -> Result<Vec<(f64, f64)>> {
    if record.frame_features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    if !(cfg.threshold > 0.0) {
        return Err(Error::Config("shot threshold must be positive".into()));
    }
    let dur = record.duration_s;
    let mut cuts = vec![0.0];
    for (i, d) in frame_distances(&record.frame_features).into_iter().enumerate() {
        if d <= cfg.threshold {
            continue;
        }
        let t = record.frame_time(i + 1);
        let last = *cuts.last().unwrap();
        if t - last >= cfg.min_shot_len_s - TIME_EPS && dur - t >= cfg.min_shot_len_s - TIME_EPS {
            cuts.push(t);
        }
    }
    cuts.push(dur);
    Ok(cuts.windows(2).map(|w| (w[0], w[1])).collect())
}

fn frames_in(record: &VideoRecord, lo: f64, hi: f64) -> FeatureMatrix {
    let n = record.num_frames();
    let a = ((lo * record.fps) - 1e-9).ceil().max(0.0) as usize;
    let b = (((hi * record.fps) - 1e-9).ceil().max(0.0) as usize).min(n);
    record.frame_features.slice_rows(a.min(b), b)
}

fn classify_span(record: &VideoRecord, lo: f64, hi: f64, classifier: &dyn ClipClassifier) -> f64 {
    let feats = frames_in(record, lo, hi);
    let p = classifier.classify(&ClipInput {
        video_id: &record.video_id,
        begin_s: lo,
        end_s: hi,
        features: &feats,
    });
    p.clamp(0.0, 1.0)
}

/// Score every whole clip of a shot and average. The trailing partial clip is dropped.
pub fn label_shot(
    record: &VideoRecord,
    begin_s: f64,
    end_s: f64,
    classifier: &dyn ClipClassifier,
) -> Result<Shot> {
    let c = classifier.clip_len_s();
    let n = ((end_s - begin_s + TIME_EPS) / c).floor() as usize;
    if n == 0 {
        return Err(Error::ShotBelowClipLength {
            duration_s: end_s - begin_s,
            clip_len_s: c,
        });
    }
    let clip_probs: Vec<f64> = (0..n)
        .map(|k| {
            let lo = begin_s + k as f64 * c;
            classify_span(record, lo, lo + c, classifier)
        })
        .collect();
    Ok(shot_from_probs(begin_s, end_s, clip_probs))
}

/// Build a shot from already-computed clip probabilities.
pub fn shot_from_probs(begin_s: f64, end_s: f64, clip_probs: Vec<f64>) -> Shot {
    let mean = clip_probs.iter().sum::<f64>() / clip_probs.len() as f64;
    Shot {
        begin_s,
        end_s,
        clip_probs,
        label: label_from_ego_prob(mean),
    }
}

fn frame_labels_from_shots(record: &VideoRecord, shots: &[Shot]) -> Vec<ViewLabel> {
    (0..record.num_frames())
        .map(|i| {
            let t = record.frame_time(i);
            let k = shots.partition_point(|s| s.begin_s <= t + 1e-9).max(1) - 1;
            shots[k].label
        })
        .collect()
}

pub fn pseudo_label_video(
    record: &VideoRecord,
    classifier: &dyn ClipClassifier,
    mode: PseudoLabelMode,
    cfg: &ShotConfig,
) -> Result<PseudoLabelSet> {
    if record.frame_features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let shots = match mode {
        PseudoLabelMode::ShotLevel => detect_shots(record, cfg)?
            .into_iter()
            .map(|(b, e)| label_shot(record, b, e, classifier))
            .collect::<Result<Vec<_>>>()?,
        PseudoLabelMode::ClipLevel => {
            // Fixed grid from 0; the remainder joins the last clip.
            let c = classifier.clip_len_s();
            let dur = record.duration_s;
            let n = ((dur + TIME_EPS) / c).floor() as usize;
            if n == 0 {
                return Err(Error::ShotBelowClipLength {
                    duration_s: dur,
                    clip_len_s: c,
                });
            }
            (0..n)
                .map(|k| {
                    let lo = k as f64 * c;
                    let end = if k + 1 == n { dur } else { lo + c };
                    let p = classify_span(record, lo, lo + c, classifier);
                    shot_from_probs(lo, end, vec![p])
                })
                .collect()
        }
    };
    Ok(PseudoLabelSet {
        video_id: record.video_id.clone(),
        mode,
        frame_labels: frame_labels_from_shots(record, &shots),
        shots,
    })
}

/// Pseudo-label a corpus, in parallel when the classifier allows it.
pub fn pseudo_label_corpus(
    records: &[VideoRecord],
    classifier: &dyn ClipClassifier,
    mode: PseudoLabelMode,
    cfg: &ShotConfig,
) -> Result<Vec<PseudoLabelSet>> {
    if classifier.concurrent() {
        records
            .par_iter()
            .map(|r| pseudo_label_video(r, classifier, mode, cfg))
            .collect()
    } else {
        records
            .iter()
            .map(|r| pseudo_label_video(r, classifier, mode, cfg))
            .collect()
    }
}

impl PseudoLabelSet {
    /// The shots as a view track covering the whole video.
    pub fn view_track(&self) -> Vec<ViewSpan> {
        self.shots
            .iter()
            .map(|s| ViewSpan {
                begin_s: s.begin_s,
                end_s: s.end_s,
                label: s.label,
            })
            .collect()
    }

    /// Copy of `record` whose view track is these pseudo-labels.
    pub fn apply(&self, record: &VideoRecord) -> VideoRecord {
        record.clone().with_view_track(self.view_track())
    }

    /// Fraction of frames whose kind matches `truth`'s track.
    pub fn frame_accuracy(&self, truth: &VideoRecord) -> Option<f64> {
        let mut hit = 0usize;
        for (i, l) in self.frame_labels.iter().enumerate() {
            if truth.view_at(truth.frame_time(i))?.kind == l.kind {
                hit += 1;
            }
        }
        Some(hit as f64 / self.frame_labels.len().max(1) as f64)
    }

    pub fn to_file(&self) -> PseudoLabelFile {
        PseudoLabelFile {
            video_id: self.video_id.clone(),
            mode: self.mode,
            shots: self
                .shots
                .iter()
                .map(|s| ShotRecord {
                    begin_s: s.begin_s,
                    end_s: s.end_s,
                    kind: s.label.kind,
                    prob: s.label.probability,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotRecord {
    pub begin_s: f64,
    pub end_s: f64,
    pub kind: ViewKind,
    pub prob: f64,
}

/// On-disk pseudo-labels of one video; frame labels are rebuilt from the shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoLabelFile {
    pub video_id: String,
    pub mode: PseudoLabelMode,
    pub shots: Vec<ShotRecord>,
}

impl PseudoLabelFile {
    pub fn into_set(self, record: &VideoRecord) -> Result<PseudoLabelSet> {
        if self.video_id != record.video_id {
            return Err(Error::Validation {
                video_id: self.video_id,
                message: format!("pseudo-labels do not belong to {}", record.video_id),
            });
        }
        let shots: Vec<Shot> = self
            .shots
            .into_iter()
            .map(|s| Shot {
                begin_s: s.begin_s,
                end_s: s.end_s,
                clip_probs: Vec::new(),
                label: ViewLabel::new(s.kind, s.prob),
            })
            .collect();
        let set = PseudoLabelSet {
            video_id: self.video_id,
            mode: self.mode,
            frame_labels: frame_labels_from_shots(record, &shots),
            shots,
        };
        set.apply(record).validate()?;
        Ok(set)
    }
}

/// Write one JSON object per video (JSONL).
pub fn save_pseudo_labels(path: &Path, sets: &[PseudoLabelSet]) -> Result<()> {
    let mut out = String::new();
    for s in sets {
        out.push_str(&serde_json::to_string(&s.to_file())?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_pseudo_labels(path: &Path) -> Result<Vec<PseudoLabelFile>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
