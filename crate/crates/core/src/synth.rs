//! Seeded synthetic corpora with a known latent switch process.
//!
//! Time is cut into slots of one prediction interval. At each slot boundary a
//! cue rule may fire and set the next view, otherwise the view switches with
//! the hazard probability. Cues surface as tokens in the upcoming narration,
//! in the previous narration, or as a marker in the last second of frames.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    CandidateStreams, FeatureMatrix, NarrationSegment, VideoRecord, ViewKind, ViewLabel, ViewSpan,
};
use crate::error::{Error, Result};
use crate::eval::AnnotationInstance;
use crate::pseudo_label::{ClipClassifier, ClipInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueChannel {
    /// Token in the narration of the slot being predicted.
    NextNarration,
    /// Token in the narration of the slot before.
    PastNarration,
    /// Marker in the last second of frames before the boundary.
    Frames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueRule {
    /// One of these is injected when the rule fires.
    pub tokens: Vec<String>,
    pub target: ViewKind,
    /// Firing probability per slot boundary.
    pub prob: f64,
    pub channel: CueChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchGrammar {
    /// Tried in order at each boundary; the first that fires wins.
    pub cue_rules: Vec<CueRule>,
    /// Switch probability when no rule fires.
    pub hazard: f64,
    /// View of the first slot; random when unset.
    pub initial_view: Option<ViewKind>,
    pub feat_dim: usize,
    pub ego_centroid: Vec<f32>,
    pub exo_centroid: Vec<f32>,
    pub noise: f64,
    /// Dimension carrying frame cues (+strength for ego, -strength for exo).
    pub frame_cue_dim: usize,
    pub frame_cue_strength: f32,
    /// Filler tokens; cue tokens should not appear here.
    pub narration_vocab: Vec<String>,
    /// Chance that a slot without a cue still has a narration.
    pub narration_rate: f64,
    pub words_per_narration: (usize, usize),
    /// Chance that the oracle classifier mislabels a clip near a view change.
    pub boundary_noise: f64,
    pub slot_s: f64,
    pub slots_per_video: (usize, usize),
    pub fps: f64,
    pub scenarios: Vec<String>,
    /// Emit synchronized ego and exo streams.
    pub multi_view: bool,
    /// Marker added to the best view's candidate stream (0 disables it).
    pub candidate_salience: f32,
}

const FILLER: &[&str] = &[
    "i", "we", "my", "our", "the", "a", "now", "then", "next", "this", "it", "you", "just", "so",
    "add", "cut", "mix", "pour", "hold", "place", "turn", "press", "fold", "pull", "push", "set",
    "bowl", "pan", "board", "knife", "spoon", "cup", "water", "oil", "salt", "flour", "dough",
    "wood", "screw", "glue", "paint", "brush", "thread", "needle", "fabric", "edge", "corner",
    "side", "top", "bottom", "piece", "part", "little", "more", "again", "slowly", "gently",
    "quickly", "here", "there", "and", "with", "into", "onto",
];

/// EGO cue words for the preset grammars.
pub const EGO_CUES: &[&str] = &[
    "closer", "zoom", "detail", "inspect", "carefully", "precisely", "tiny", "fine", "texture",
    "stitch", "grain", "notch",
];

/// EXO cue words for the preset grammars.
pub const EXO_CUES: &[&str] = &[
    "wide", "overview", "whole", "everything", "setup", "around", "room", "table", "step",
    "finished", "result", "overall",
];

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for SwitchGrammar {
    fn default() -> Self {
        let d = 16;
        // Ego and exo differ by +-1 on the first 12 dimensions.
        let ego: Vec<f32> = (0..d).map(|k| if k >= 12 { 0.0 } else if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let exo: Vec<f32> = ego.iter().map(|v| -v).collect();
        Self {
            cue_rules: Vec::new(),
            hazard: 0.0,
            initial_view: None,
            feat_dim: d,
            ego_centroid: ego,
            exo_centroid: exo,
            noise: 0.3,
            frame_cue_dim: d - 1,
            frame_cue_strength: 3.0,
            narration_vocab: words(FILLER),
            narration_rate: 0.6,
            words_per_narration: (3, 7),
            boundary_noise: 0.0,
            slot_s: 2.0,
            slots_per_video: (20, 40),
            fps: 4.0,
            scenarios: words(&["cooking", "crafts", "repair", "sports"]),
            multi_view: false,
            candidate_salience: 0.0,
        }
    }
}

impl SwitchGrammar {
    /// "closer" forces ego and "wide" forces exo in the upcoming narration; no hazard.
    pub fn deterministic_cue() -> Self {
        Self {
            cue_rules: vec![
                CueRule {
                    tokens: words(&["closer"]),
                    target: ViewKind::Ego,
                    prob: 0.3,
                    channel: CueChannel::NextNarration,
                },
                CueRule {
                    tokens: words(&["wide"]),
                    target: ViewKind::Exo,
                    prob: 0.3,
                    channel: CueChannel::NextNarration,
                },
            ],
            ..Self::default()
        }
    }

    /// No cues, constant switch hazard.
    pub fn pure_hazard(h: f64) -> Self {
        Self {
            hazard: h,
            ..Self::default()
        }
    }

    /// One ego and one exo cue in each of the three input channels.
    pub fn split_cues() -> Self {
        let rule = |tok: &str, target, channel| CueRule {
            tokens: words(&[tok]),
            target,
            prob: 0.11,
            channel,
        };
        Self {
            cue_rules: vec![
                rule("closer", ViewKind::Ego, CueChannel::NextNarration),
                rule("wide", ViewKind::Exo, CueChannel::NextNarration),
                rule("zoom", ViewKind::Ego, CueChannel::PastNarration),
                rule("overview", ViewKind::Exo, CueChannel::PastNarration),
                rule("", ViewKind::Ego, CueChannel::Frames),
                rule("", ViewKind::Exo, CueChannel::Frames),
            ],
            narration_rate: 0.8,
            ..Self::default()
        }
    }

    /// Many rare cue words plus a small hazard; cues are learnable from a
    /// large pseudo-labeled corpus but sparse in a few hundred labels.
    pub fn mixed() -> Self {
        Self {
            cue_rules: vec![
                CueRule {
                    tokens: words(EGO_CUES),
                    target: ViewKind::Ego,
                    prob: 0.3,
                    channel: CueChannel::NextNarration,
                },
                CueRule {
                    tokens: words(EXO_CUES),
                    target: ViewKind::Exo,
                    prob: 0.3,
                    channel: CueChannel::NextNarration,
                },
            ],
            hazard: 0.05,
            ..Self::default()
        }
    }

    pub fn with_multi_view(mut self) -> Self {
        self.multi_view = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGrammar(m.into()));
        if self.narration_vocab.is_empty() {
            return bad("empty narration vocabulary");
        }
        let p_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !p_ok(self.hazard) || !p_ok(self.boundary_noise) || !p_ok(self.narration_rate) {
            return bad("probabilities must lie in [0, 1]");
        }
        for r in &self.cue_rules {
            if !p_ok(r.prob) {
                return bad("cue probabilities must lie in [0, 1]");
            }
            if r.channel != CueChannel::Frames && r.tokens.iter().all(|t| t.is_empty()) {
                return bad("narration cue rules need tokens");
            }
        }
        if self.ego_centroid.len() != self.feat_dim || self.exo_centroid.len() != self.feat_dim {
            return bad("centroids must have feat_dim entries");
        }
        if self.ego_centroid == self.exo_centroid {
            return bad("centroids must differ");
        }
        if self.frame_cue_dim >= self.feat_dim {
            return bad("frame_cue_dim out of range");
        }
        if self.slots_per_video.0 == 0 || self.slots_per_video.0 > self.slots_per_video.1 {
            return bad("bad slots_per_video range");
        }
        if self.words_per_narration.0 == 0 || self.words_per_narration.0 > self.words_per_narration.1 {
            return bad("bad words_per_narration range");
        }
        if !(self.slot_s > 0.0 && self.fps > 0.0 && self.noise >= 0.0) {
            return bad("slot_s, fps must be positive and noise non-negative");
        }
        Ok(())
    }
}

/// Where a rule fired, for tests and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CueEvent {
    pub video_id: String,
    pub slot: usize,
    pub rule: usize,
}

/// Nearest-centroid clip classifier with seeded mistakes near true view changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleClassifier {
    pub ego_centroid: Vec<f32>,
    pub exo_centroid: Vec<f32>,
    /// Dimensions the classifier ignores (the frame-cue marker).
    pub ignore_dim: Option<usize>,
    pub boundary_noise: f64,
    pub clip_len_s: f64,
    pub seed: u64,
    /// True view changes per video.
    pub boundaries: BTreeMap<String, Vec<f64>>,
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl OracleClassifier {
    fn clean_prob(&self, feats: &FeatureMatrix) -> f64 {
        let m = feats.mean_row();
        let mut de = 0.0;
        let mut dx = 0.0;
        for k in 0..m.len() {
            if Some(k) == self.ignore_dim {
                continue;
            }
            de += (m[k] - self.ego_centroid[k] as f64).powi(2);
            dx += (m[k] - self.exo_centroid[k] as f64).powi(2);
        }
        let p = 1.0 / (1.0 + (-(dx.sqrt() - de.sqrt()) * 2.0).exp());
        p.clamp(0.02, 0.98)
    }
}

impl ClipClassifier for OracleClassifier {
    fn clip_len_s(&self) -> f64 {
        self.clip_len_s
    }

    fn classify(&self, clip: &ClipInput<'_>) -> f64 {
        if clip.features.rows() == 0 {
            return 0.5;
        }
        let p = self.clean_prob(clip.features);
        let near = self.boundaries.get(clip.video_id).is_some_and(|bs| {
            bs.iter()
                .any(|&b| b > clip.begin_s - self.clip_len_s && b < clip.end_s + self.clip_len_s)
        });
        if near && self.boundary_noise > 0.0 {
            let key = format!("{}@{:.3}", clip.video_id, clip.begin_s);
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(key.as_bytes(), self.seed));
            if rng.gen_bool(self.boundary_noise) {
                // Confidently right becomes mildly wrong.
                return 0.5 + (0.5 - p) * 0.5;
            }
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<VideoRecord>,
    pub oracle: OracleClassifier,
    pub cue_events: Vec<CueEvent>,
}

struct VideoPlan {
    views: Vec<ViewKind>,
    /// Cue token to inject into each slot's narration.
    narration_cues: Vec<Vec<String>>,
    /// Frame-cue sign for the last second of each slot.
    frame_cues: Vec<Option<ViewKind>>,
    fired: Vec<(usize, usize)>,
}

fn plan_video(g: &SwitchGrammar, rng: &mut ChaCha8Rng, n: usize) -> VideoPlan {
    let mut views = Vec::with_capacity(n);
    views.push(g.initial_view.unwrap_or_else(|| {
        if rng.gen_bool(0.5) {
            ViewKind::Ego
        } else {
            ViewKind::Exo
        }
    }));
    let mut narration_cues = vec![Vec::new(); n];
    let mut frame_cues = vec![None; n];
    let mut fired = Vec::new();
    for k in 1..n {
        let mut next = None;
        for (ri, r) in g.cue_rules.iter().enumerate() {
            if rng.gen_bool(r.prob) {
                next = Some(r.target);
                fired.push((k, ri));
                match r.channel {
                    CueChannel::NextNarration => narration_cues[k].push(r.tokens.choose(rng).unwrap().clone()),
                    CueChannel::PastNarration => narration_cues[k - 1].push(r.tokens.choose(rng).unwrap().clone()),
                    CueChannel::Frames => frame_cues[k - 1] = Some(r.target),
                }
                break;
            }
        }
        let prev = views[k - 1];
        views.push(match next {
            Some(v) => v,
            None if rng.gen_bool(g.hazard) => prev.other(),
            None => prev,
        });
    }
    VideoPlan {
        views,
        narration_cues,
        frame_cues,
        fired,
    }
}

fn noisy_row(rng: &mut ChaCha8Rng, centroid: &[f32], normal: &Normal<f64>) -> Vec<f32> {
    centroid.iter().map(|&c| c + normal.sample(rng) as f32).collect()
}

fn generate_video(g: &SwitchGrammar, video_id: String, seed: u64) -> Result<(VideoRecord, Vec<f64>, Vec<(usize, usize)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(g.slots_per_video.0..=g.slots_per_video.1);
    let plan = plan_video(g, &mut rng, n);
    let duration = n as f64 * g.slot_s;
    let rows = (duration * g.fps).round() as usize;
    let normal = Normal::new(0.0, g.noise.max(1e-12)).expect("valid normal");
    let centroid = |v: ViewKind| match v {
        ViewKind::Ego => &g.ego_centroid,
        ViewKind::Exo => &g.exo_centroid,
    };

    let slot_of = |i: usize| ((i as f64 / g.fps + 1e-9) / g.slot_s).floor().min((n - 1) as f64) as usize;
    let mut data = Vec::with_capacity(rows * g.feat_dim);
    let mut ego_data = Vec::new();
    let mut exo_data = Vec::new();
    for i in 0..rows {
        let k = slot_of(i);
        let t = i as f64 / g.fps;
        let mut row = noisy_row(&mut rng, centroid(plan.views[k]), &normal);
        if let Some(sign) = plan.frame_cues[k] {
            if t >= (k + 1) as f64 * g.slot_s - 1.0 - 1e-9 {
                let s = if sign == ViewKind::Ego { 1.0 } else { -1.0 };
                row[g.frame_cue_dim] += s * g.frame_cue_strength;
            }
        }
        data.extend_from_slice(&row);
        if g.multi_view {
            let mut e = noisy_row(&mut rng, &g.ego_centroid, &normal);
            let mut x = noisy_row(&mut rng, &g.exo_centroid, &normal);
            if g.candidate_salience != 0.0 {
                let best = if plan.views[k] == ViewKind::Ego { &mut e } else { &mut x };
                best[g.frame_cue_dim] += g.candidate_salience;
            }
            ego_data.extend_from_slice(&e);
            exo_data.extend_from_slice(&x);
        }
    }

    let mut narrations = Vec::new();
    for k in 0..n {
        let cues = &plan.narration_cues[k];
        if cues.is_empty() && !rng.gen_bool(g.narration_rate) {
            continue;
        }
        let nw = rng.gen_range(g.words_per_narration.0..=g.words_per_narration.1);
        let mut toks: Vec<String> = (0..nw).map(|_| g.narration_vocab.choose(&mut rng).unwrap().clone()).collect();
        for c in cues {
            let at = rng.gen_range(0..=toks.len());
            toks.insert(at, c.clone());
        }
        let s0 = k as f64 * g.slot_s;
        let begin = s0 + rng.gen_range(0.05..0.5) * g.slot_s / 2.0;
        let end = (begin + rng.gen_range(0.4..0.7) * g.slot_s).min(s0 + g.slot_s - 0.05);
        narrations.push(NarrationSegment::new(toks.join(" "), begin, end));
    }

    let mut track: Vec<ViewSpan> = Vec::new();
    let mut boundaries = Vec::new();
    for (k, &v) in plan.views.iter().enumerate() {
        let b = k as f64 * g.slot_s;
        match track.last_mut() {
            Some(last) if last.label.kind == v => last.end_s = b + g.slot_s,
            _ => {
                if k > 0 {
                    boundaries.push(b);
                }
                track.push(ViewSpan {
                    begin_s: b,
                    end_s: b + g.slot_s,
                    label: ViewLabel::certain(v),
                });
            }
        }
    }

    let candidates = if g.multi_view {
        Some(CandidateStreams {
            ego: FeatureMatrix::new(rows, g.feat_dim, ego_data)?,
            exo: FeatureMatrix::new(rows, g.feat_dim, exo_data)?,
        })
    } else {
        None
    };
    let scenario = g.scenarios.choose(&mut rng).cloned();
    let rec = VideoRecord {
        video_id,
        duration_s: duration,
        fps: g.fps,
        frame_features: FeatureMatrix::new(rows, g.feat_dim, data)?,
        narrations,
        view_track: Some(track),
        scenario,
        candidates,
    };
    rec.validate()?;
    Ok((rec, boundaries, plan.fired))
}

/// Generate `n_videos` records with ground-truth tracks plus the matching oracle classifier.
pub fn generate_corpus(grammar: &SwitchGrammar, n_videos: usize, seed: u64) -> Result<SynthCorpus> {
    grammar.validate()?;
    if n_videos == 0 {
        return Err(Error::InvalidGrammar("n_videos must be at least 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_videos);
    let mut boundaries = BTreeMap::new();
    let mut cue_events = Vec::new();
    for i in 0..n_videos {
        let id = format!("syn{seed}_{i:04}");
        let (rec, b, fired) = generate_video(grammar, id.clone(), master.gen())?;
        cue_events.extend(fired.into_iter().map(|(slot, rule)| CueEvent {
            video_id: id.clone(),
            slot,
            rule,
        }));
        boundaries.insert(id, b);
        records.push(rec);
    }
    Ok(SynthCorpus {
        records,
        oracle: OracleClassifier {
            ego_centroid: grammar.ego_centroid.clone(),
            exo_centroid: grammar.exo_centroid.clone(),
            ignore_dim: Some(grammar.frame_cue_dim),
            boundary_noise: grammar.boundary_noise,
            clip_len_s: 2.0,
            seed,
            boundaries,
        },
        cue_events,
    })
}

/// Nine-annotator votes with per-instance difficulty.
///
/// Each annotator independently picks the true label with probability
/// `1 - difficulty`, where difficulty is uniform on `[0, max_difficulty]`.
pub fn simulate_votes(n: usize, n_annotators: usize, max_difficulty: f64, seed: u64) -> Vec<AnnotationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truths: Vec<(String, ViewKind)> = (0..n)
        .map(|i| {
            let truth = if rng.gen_bool(0.5) { ViewKind::Ego } else { ViewKind::Exo };
            (format!("ann{i:05}"), truth)
        })
        .collect();
    votes_for(&truths, n_annotators, max_difficulty, rng.gen())
}

/// Votes for known instances, same noise model as [`simulate_votes`].
pub fn votes_for(truths: &[(String, ViewKind)], n_annotators: usize, max_difficulty: f64, seed: u64) -> Vec<AnnotationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    truths
        .iter()
        .map(|(id, truth)| {
            let d = rng.gen_range(0.0..=max_difficulty);
            let votes = (0..n_annotators)
                .map(|_| if rng.gen_bool(1.0 - d) { *truth } else { truth.other() })
                .collect();
            AnnotationInstance {
                instance_id: id.clone(),
                votes,
                accepted_label: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudo_label::{pseudo_label_video, PseudoLabelMode, ShotConfig};

    #[test]
    fn deterministic_cue_precedes_every_ego_segment() {
        let c = generate_corpus(&SwitchGrammar::deterministic_cue(), 20, 1).unwrap();
        for r in &c.records {
            let track = r.view_track.as_ref().unwrap();
            for span in track.iter().skip(1).filter(|s| s.label.kind == ViewKind::Ego) {
                let n = r
                    .narrations
                    .iter()
                    .find(|n| n.begin_s >= span.begin_s && n.end_s <= span.begin_s + 2.0)
                    .expect("cue narration");
                assert!(n.text.split(' ').any(|w| w == "closer"), "{}", n.text);
            }
        }
    }

    #[test]
    fn hazard_rate_matches() {
        let mut g = SwitchGrammar::pure_hazard(0.5);
        g.slots_per_video = (101, 101);
        let c = generate_corpus(&g, 100, 7).unwrap();
        let mut switches = 0;
        let mut steps = 0;
        for r in &c.records {
            for k in 1..101 {
                let a = r.view_at(k as f64 * 2.0 - 1.0).unwrap().kind;
                let b = r.view_at(k as f64 * 2.0 + 1.0).unwrap().kind;
                steps += 1;
                switches += (a != b) as usize;
            }
        }
        assert_eq!(steps, 10_000);
        let rate = switches as f64 / steps as f64;
        assert!((rate - 0.5).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn same_seed_same_corpus() {
        let g = SwitchGrammar::split_cues().with_multi_view();
        let a = generate_corpus(&g, 3, 5).unwrap();
        let b = generate_corpus(&g, 3, 5).unwrap();
        assert_eq!(a.records, b.records);
        assert_ne!(a.records, generate_corpus(&g, 3, 6).unwrap().records);
    }

    #[test]
    fn degenerate_grammar_is_rejected() {
        let mut g = SwitchGrammar::default();
        g.narration_vocab.clear();
        assert!(matches!(generate_corpus(&g, 1, 0), Err(Error::InvalidGrammar(_))));
        assert!(generate_corpus(&SwitchGrammar::default(), 0, 0).is_err());
    }

    #[test]
    fn noiseless_oracle_is_exact() {
        let c = generate_corpus(&SwitchGrammar::pure_hazard(0.3), 10, 3).unwrap();
        for r in &c.records {
            let set = pseudo_label_video(r, &c.oracle, PseudoLabelMode::ShotLevel, &ShotConfig::default()).unwrap();
            assert_eq!(set.frame_accuracy(r), Some(1.0), "{}", r.video_id);
        }
    }

    #[test]
    fn simulated_votes_shrink_with_threshold() {
        use crate::eval::filter_instances;
        let v = simulate_votes(2000, 9, 0.4, 1);
        let a = filter_instances(&v, 7.0 / 9.0).len();
        let b = filter_instances(&v, 8.0 / 9.0).len();
        let c = filter_instances(&v, 1.0).len();
        assert!(a > b && b > c && c > 0, "{a} {b} {c}");
    }
}
