//! Corpus types, on-disk formats and windowed sample extraction.

mod features;
mod manifest;
mod sample;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{read_features, write_features, FeatureMatrix, FEATURE_MAGIC};
pub use manifest::{load_manifest, load_manifest_partial, write_manifest};
pub use sample::{
    extract_sample, extract_selector_sample, majority_view, narration_view, NextNarration,
    PastNarration, Sample, SelectorSample, WindowConfig,
};

/// Slack used when comparing timestamps that came out of float arithmetic.
pub(crate) const TIME_EPS: f64 = 1e-6;

/// The two view classes. The discriminant doubles as the view-table key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    #[serde(alias = "EGO", alias = "Ego")]
    Ego = 0,
    #[serde(alias = "EXO", alias = "Exo")]
    Exo = 1,
}

impl ViewKind {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            ViewKind::Ego
        } else {
            ViewKind::Exo
        }
    }

    pub fn other(self) -> Self {
        match self {
            ViewKind::Ego => ViewKind::Exo,
            ViewKind::Exo => ViewKind::Ego,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Ego => "ego",
            ViewKind::Exo => "exo",
        }
    }
}

impl std::fmt::Display for ViewKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ViewKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ego" => Ok(ViewKind::Ego),
            "exo" => Ok(ViewKind::Exo),
            other => Err(Error::Config(format!("unknown view kind {other:?}"))),
        }
    }
}

/// A view class with the confidence that it is correct (1.0 for manual labels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewLabel {
    pub kind: ViewKind,
    pub probability: f64,
}

impl ViewLabel {
    pub fn new(kind: ViewKind, probability: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&probability));
        Self { kind, probability }
    }

    pub fn certain(kind: ViewKind) -> Self {
        Self {
            kind,
            probability: 1.0,
        }
    }
}

/// One transcribed narration with its time span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationSegment {
    pub text: String,
    pub begin_s: f64,
    pub end_s: f64,
}

impl NarrationSegment {
    pub fn new(text: impl Into<String>, begin_s: f64, end_s: f64) -> Self {
        Self {
            text: text.into(),
            begin_s,
            end_s,
        }
    }

    pub fn mean_time(&self) -> f64 {
        0.5 * (self.begin_s + self.end_s)
    }

    /// Length of the intersection with the half-open interval `(lo, hi]`.
    pub fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.end_s.min(hi) - self.begin_s.max(lo)).max(0.0)
    }
}

/// A labeled interval `[begin_s, end_s)` of a view track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpan {
    pub begin_s: f64,
    pub end_s: f64,
    pub label: ViewLabel,
}

/// Time-synchronized ego and exo streams of a multi-view recording.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateStreams {
    pub ego: FeatureMatrix,
    pub exo: FeatureMatrix,
}

/// One narrated video with precomputed frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub duration_s: f64,
    pub fps: f64,
    pub frame_features: FeatureMatrix,
    pub narrations: Vec<NarrationSegment>,
    pub view_track: Option<Vec<ViewSpan>>,
    pub scenario: Option<String>,
    /// Present only for multi-view recordings used by the selector.
    pub candidates: Option<CandidateStreams>,
}

impl VideoRecord {
    pub fn num_frames(&self) -> usize {
        self.frame_features.rows()
    }

    pub fn feat_dim(&self) -> usize {
        self.frame_features.dim()
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }

    /// Index of the frame shown at absolute time `t`, clamped to the stream.
    pub fn frame_index_at(&self, t: f64) -> usize {
        let i = (t.max(0.0) * self.fps + 1e-9).floor() as usize;
        i.min(self.num_frames().saturating_sub(1))
    }

    /// Label of the view-track span containing `t`.
    pub fn view_at(&self, t: f64) -> Option<ViewLabel> {
        let track = self.view_track.as_ref()?;
        let idx = track.partition_point(|s| s.begin_s <= t + 1e-9);
        if idx == 0 {
            return None;
        }
        let span = &track[idx - 1];
        if t < span.end_s - 1e-9 || (idx == track.len() && t <= span.end_s + TIME_EPS) {
            Some(span.label)
        } else {
            None
        }
    }

    pub fn with_view_track(mut self, track: Vec<ViewSpan>) -> Self {
        self.view_track = Some(track);
        self
    }

    /// Check every structural invariant of the record.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Validation {
                video_id: self.video_id.clone(),
                message,
            })
        };
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return fail(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return fail(format!("fps must be > 0, got {}", self.fps));
        }
        let expected = (self.duration_s * self.fps).floor() as i64;
        let rows = self.num_frames() as i64;
        if (rows - expected).abs() > 1 {
            return fail(format!(
                "frame count {rows} inconsistent with duration*fps = {expected}"
            ));
        }
        if self.frame_features.data().iter().any(|v| !v.is_finite()) {
            return fail("non-finite frame feature".into());
        }
        let mut prev_begin = f64::NEG_INFINITY;
        for (i, seg) in self.narrations.iter().enumerate() {
            if !(seg.end_s > seg.begin_s) {
                return fail(format!(
                    "narration {i} has end_s {} <= begin_s {}",
                    seg.end_s, seg.begin_s
                ));
            }
            if seg.begin_s < 0.0 {
                return fail(format!("narration {i} begins before 0"));
            }
            if seg.begin_s < prev_begin {
                return fail(format!("narration {i} is out of order"));
            }
            prev_begin = seg.begin_s;
        }
        if let Some(track) = &self.view_track {
            if track.is_empty() {
                return fail("empty view track".into());
            }
            if track[0].begin_s.abs() > TIME_EPS {
                return fail("view track does not start at 0".into());
            }
            for (i, span) in track.iter().enumerate() {
                if !(span.end_s > span.begin_s) {
                    return fail(format!("view span {i} is empty or reversed"));
                }
                if !(0.0..=1.0).contains(&span.label.probability) {
                    return fail(format!("view span {i} probability out of [0,1]"));
                }
                if i > 0 && (span.begin_s - track[i - 1].end_s).abs() > TIME_EPS {
                    return fail(format!("view span {i} leaves a gap or overlaps"));
                }
            }
            if track.last().unwrap().end_s < self.duration_s - TIME_EPS {
                return fail("view track does not cover the whole video".into());
            }
        }
        if let Some(c) = &self.candidates {
            if c.ego.rows() != c.exo.rows() || c.ego.dim() != c.exo.dim() {
                return fail("candidate streams are not synchronized".into());
            }
            if c.ego.dim() != self.feat_dim() {
                return fail("candidate stream dimension differs from frame features".into());
            }
            if c.ego.rows() == 0 {
                return fail("empty candidate streams".into());
            }
        }
        Ok(())
    }
}

/// Collapse per-frame labels into a contiguous track of maximal equal-kind spans.
pub fn track_from_frame_labels(labels: &[ViewLabel], fps: f64, duration_s: f64) -> Vec<ViewSpan> {
    let mut spans: Vec<ViewSpan> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let t = i as f64 / fps;
        match spans.last_mut() {
            Some(last) if last.label == *label => last.end_s = ((i + 1) as f64 / fps).min(duration_s),
            _ => {
                if let Some(last) = spans.last_mut() {
                    last.end_s = t;
                }
                spans.push(ViewSpan {
                    begin_s: t,
                    end_s: ((i + 1) as f64 / fps).min(duration_s),
                    label: *label,
                });
            }
        }
    }
    if let Some(last) = spans.last_mut() {
        last.end_s = duration_s;
    }
    spans
}
