use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, NarrationSegment, VideoRecord, ViewKind, ViewLabel};
use crate::error::{Error, Result};

/// Windowing constants for sample extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Past-frame window length in seconds.
    pub past_frames_s: f64,
    /// Past-narration window length in seconds.
    pub past_narrations_s: f64,
    /// Prediction interval length in seconds.
    pub delta_s: f64,
    /// Frame sampling rate of the past-frame and candidate grids.
    pub frame_rate: f64,
    /// Kind chosen when a majority vote over frames is tied.
    pub tie_break: ViewKind,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            past_frames_s: 8.0,
            past_narrations_s: 32.0,
            delta_s: 2.0,
            frame_rate: 4.0,
            tie_break: ViewKind::Exo,
        }
    }
}

impl WindowConfig {
    pub fn frames_per_window(&self) -> usize {
        (self.past_frames_s * self.frame_rate).round() as usize
    }

    pub fn frames_per_delta(&self) -> usize {
        (self.delta_s * self.frame_rate).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PastNarration {
    pub segment: NarrationSegment,
    pub view: ViewLabel,
    pub rel_mean_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextNarration {
    /// Empty when no narration overlaps the prediction interval.
    pub text: String,
    pub rel_mean_time: f64,
}

/// One prediction instance at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub video_id: String,
    pub t: f64,
    pub delta: f64,
    pub past_frame_features: FeatureMatrix,
    pub past_frame_views: Vec<ViewLabel>,
    /// Frame times relative to the earliest included past narration.
    pub past_frame_times: Vec<f64>,
    pub past_narrations: Vec<PastNarration>,
    pub next_narration: NextNarration,
    pub target: ViewLabel,
    pub scenario: Option<String>,
    /// Absolute time every relative time in this sample is measured from.
    pub anchor_s: f64,
}

impl Sample {
    pub fn last_view(&self) -> ViewKind {
        self.past_frame_views
            .last()
            .expect("samples always hold at least one past frame")
            .kind
    }

    pub fn is_switch(&self) -> bool {
        self.target.kind != self.last_view()
    }

    /// Replace the target, e.g. with a human best-view label.
    pub fn with_target(mut self, target: ViewLabel) -> Self {
        self.target = target;
        self
    }
}

/// A detector sample extended with the simultaneous ego and exo frames of `(t, t+Δ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorSample {
    pub base: Sample,
    pub ego_candidate_features: FeatureMatrix,
    pub exo_candidate_features: FeatureMatrix,
}

fn frame_range(record: &VideoRecord, lo: f64, hi: f64) -> std::ops::Range<usize> {
    // Frames with lo <= i/fps <= hi.
    let n = record.num_frames();
    let start = ((lo * record.fps) - 1e-9).ceil().max(0.0) as usize;
    let end = (((hi * record.fps) + 1e-9).floor() + 1.0).max(0.0) as usize;
    start.min(n)..end.min(n)
}

/// Majority view over the frames whose time falls in `[lo, hi]`, optionally
/// excluding either endpoint.
pub fn majority_view(
    record: &VideoRecord,
    lo: f64,
    hi: f64,
    include_lo: bool,
    include_hi: bool,
    tie_break: ViewKind,
) -> Option<ViewLabel> {
    let mut counts = [0usize; 2];
    let mut prob_sums = [0.0f64; 2];
    for i in frame_range(record, lo, hi) {
        let ft = record.frame_time(i);
        if (!include_lo && ft <= lo + 1e-9) || (!include_hi && ft >= hi - 1e-9) {
            continue;
        }
        let label = record.view_at(ft)?;
        counts[label.kind.index()] += 1;
        prob_sums[label.kind.index()] += label.probability;
    }
    let kind = match counts[0].cmp(&counts[1]) {
        _ if counts[0] + counts[1] == 0 => return None,
        std::cmp::Ordering::Greater => ViewKind::Ego,
        std::cmp::Ordering::Less => ViewKind::Exo,
        std::cmp::Ordering::Equal => tie_break,
    };
    let k = kind.index();
    Some(ViewLabel::new(kind, prob_sums[k] / counts[k] as f64))
}

/// Dominant view of the frames inside a narration's `[begin_s, end_s]`.
pub fn narration_view(
    record: &VideoRecord,
    seg: &NarrationSegment,
    tie_break: ViewKind,
) -> Result<ViewLabel> {
    if record.view_track.is_none() {
        return Err(Error::NoViewTrack(record.video_id.clone()));
    }
    majority_view(record, seg.begin_s, seg.end_s, true, true, tie_break).ok_or(
        Error::EmptyNarrationInterval {
            begin_s: seg.begin_s,
            end_s: seg.end_s,
        },
    )
}

/// Cut the prediction-time sample at `t` out of a labeled record.
pub fn extract_sample(record: &VideoRecord, t: f64, cfg: &WindowConfig) -> Result<Sample> {
    if record.view_track.is_none() {
        return Err(Error::NoViewTrack(record.video_id.clone()));
    }
    if !(t >= 0.0) {
        return Err(Error::InsufficientContext { t });
    }

    // Past frames on a grid anchored at t, oldest first.
    let n = cfg.frames_per_window();
    let mut frame_abs = Vec::with_capacity(n);
    for k in (1..=n).rev() {
        let ft = t - k as f64 / cfg.frame_rate;
        if ft >= -1e-9 && ft < record.duration_s {
            frame_abs.push(ft.max(0.0));
        }
    }
    if frame_abs.is_empty() {
        return Err(Error::InsufficientContext { t });
    }
    let frame_idx: Vec<usize> = frame_abs.iter().map(|&ft| record.frame_index_at(ft)).collect();
    let past_frame_views = frame_abs
        .iter()
        .map(|&ft| record.view_at(ft).ok_or(Error::UnlabeledTarget { t: ft }))
        .collect::<Result<Vec<_>>>()?;

    // Narrations intersecting [t - T^N, t), kept whole.
    let window_lo = t - cfg.past_narrations_s;
    let past: Vec<&NarrationSegment> = record
        .narrations
        .iter()
        .filter(|s| s.begin_s < t && s.end_s > window_lo)
        .collect();
    let anchor = past.first().map_or(frame_abs[0], |s| s.begin_s);

    let mut past_narrations = Vec::with_capacity(past.len());
    for seg in &past {
        // Only frames before t may inform a past narration's view.
        let view = majority_view(record, seg.begin_s, seg.end_s.min(t), true, seg.end_s < t, cfg.tie_break)
            .unwrap_or(past_frame_views[past_frame_views.len() - 1]);
        past_narrations.push(PastNarration {
            segment: (*seg).clone(),
            view,
            rel_mean_time: 0.5 * ((seg.begin_s - anchor) + (seg.end_s - anchor)),
        });
    }

    let hi = t + cfg.delta_s;
    let next = record
        .narrations
        .iter()
        .map(|s| (s, s.overlap(t, hi)))
        .filter(|(_, o)| *o > 0.0)
        .fold(None::<(&NarrationSegment, f64)>, |best, (s, o)| match best {
            Some((_, bo)) if bo >= o => best,
            _ => Some((s, o)),
        });
    let next_narration = match next {
        Some((s, _)) => NextNarration {
            text: s.text.clone(),
            rel_mean_time: 0.5 * ((s.begin_s - anchor) + (s.end_s - anchor)),
        },
        None => NextNarration {
            text: String::new(),
            rel_mean_time: t + 0.5 * cfg.delta_s - anchor,
        },
    };

    let target = majority_view(record, t, hi, false, true, cfg.tie_break)
        .ok_or(Error::UnlabeledTarget { t })?;

    Ok(Sample {
        video_id: record.video_id.clone(),
        t,
        delta: cfg.delta_s,
        past_frame_features: record.frame_features.select_rows(&frame_idx),
        past_frame_views,
        past_frame_times: frame_abs.iter().map(|&ft| ft - anchor).collect(),
        past_narrations,
        next_narration,
        target,
        scenario: record.scenario.clone(),
        anchor_s: anchor,
    })
}

/// Extract a sample plus the candidate ego/exo frames on the `(t, t+Δ]` grid.
pub fn extract_selector_sample(
    record: &VideoRecord,
    t: f64,
    cfg: &WindowConfig,
) -> Result<SelectorSample> {
    let streams = record
        .candidates
        .as_ref()
        .ok_or_else(|| Error::MissingInput(format!("candidate streams for {}", record.video_id)))?;
    let base = extract_sample(record, t, cfg)?;
    let n = cfg.frames_per_delta().max(1);
    let idx: Vec<usize> = (1..=n)
        .map(|k| record.frame_index_at(t + k as f64 / cfg.frame_rate))
        .map(|i| i.min(streams.ego.rows() - 1))
        .collect();
    Ok(SelectorSample {
        base,
        ego_candidate_features: streams.ego.select_rows(&idx),
        exo_candidate_features: streams.exo.select_rows(&idx),
    })
}
