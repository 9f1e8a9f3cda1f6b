//! Fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    CandidateStreams, FeatureMatrix, NarrationSegment, VideoRecord, ViewKind, ViewLabel, ViewSpan,
    WindowConfig,
};

pub fn small_window() -> WindowConfig {
    WindowConfig {
        past_frames_s: 2.0,
        past_narrations_s: 8.0,
        delta_s: 2.0,
        frame_rate: 2.0,
        tie_break: ViewKind::Exo,
    }
}

/// 20 s at 4 fps with an ego span in the middle and a few narrations.
pub fn toy_record(feat_dim: usize, seed: u64) -> VideoRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fps = 4.0;
    let duration = 20.0;
    let rows = 80;
    let data: Vec<f32> = (0..rows * feat_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let frame_features = FeatureMatrix::new(rows, feat_dim, data).unwrap();
    let mk = |b: f64, e: f64, k: ViewKind| ViewSpan {
        begin_s: b,
        end_s: e,
        label: ViewLabel::certain(k),
    };
    let cand = |rng: &mut ChaCha8Rng| {
        let d: Vec<f32> = (0..rows * feat_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMatrix::new(rows, feat_dim, d).unwrap()
    };
    let ego = cand(&mut rng);
    let exo = cand(&mut rng);
    VideoRecord {
        video_id: format!("toy{seed}"),
        duration_s: duration,
        fps,
        frame_features,
        narrations: vec![
            NarrationSegment::new("I pick up the knife", 1.0, 3.0),
            NarrationSegment::new("take a closer look at the cut", 5.0, 7.5),
            NarrationSegment::new("we slice the onion", 9.0, 11.0),
            NarrationSegment::new("now the pan", 14.0, 15.0),
        ],
        view_track: Some(vec![
            mk(0.0, 6.0, ViewKind::Exo),
            mk(6.0, 12.0, ViewKind::Ego),
            mk(12.0, 20.0, ViewKind::Exo),
        ]),
        scenario: Some("cooking".into()),
        candidates: Some(CandidateStreams { ego, exo }),
    }
}
