//! JSONL manifest: one video per line, features stored in sibling binary files.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    read_features, write_features, CandidateStreams, NarrationSegment, ViewKind, ViewLabel,
    ViewSpan, VideoRecord,
};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    video_id: String,
    duration_s: f64,
    fps: f64,
    features: String,
    narrations: Vec<NarrationSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    views: Option<Vec<ViewLine>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ego_features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exo_features: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewLine {
    begin_s: f64,
    end_s: f64,
    kind: ViewKind,
    prob: f64,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_lines(path: &Path) -> Result<Vec<(usize, ManifestLine)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, parsed));
    }
    Ok(out)
}

fn load_features(base: &Path, video_id: &str, rel: &str) -> Result<super::FeatureMatrix> {
    let p = resolve(base, rel);
    if !p.exists() {
        return Err(Error::MissingFeatures {
            video_id: video_id.to_string(),
            path: p,
        });
    }
    read_features(&p)
}

fn into_record(base: &Path, line: ManifestLine) -> Result<VideoRecord> {
    let frame_features = load_features(base, &line.video_id, &line.features)?;
    let candidates = match (&line.ego_features, &line.exo_features) {
        (Some(g), Some(x)) => Some(CandidateStreams {
            ego: load_features(base, &line.video_id, g)?,
            exo: load_features(base, &line.video_id, x)?,
        }),
        (None, None) => None,
        _ => {
            return Err(Error::Validation {
                video_id: line.video_id,
                message: "ego_features and exo_features must be given together".into(),
            })
        }
    };
    let view_track = line.views.map(|vs| {
        vs.into_iter()
            .map(|v| ViewSpan {
                begin_s: v.begin_s,
                end_s: v.end_s,
                label: ViewLabel {
                    kind: v.kind,
                    probability: v.prob,
                },
            })
            .collect()
    });
    let record = VideoRecord {
        video_id: line.video_id,
        duration_s: line.duration_s,
        fps: line.fps,
        frame_features,
        narrations: line.narrations,
        view_track,
        scenario: line.scenario,
        candidates,
    };
    record.validate()?;
    Ok(record)
}

fn check_dims(records: &[VideoRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        let dim = first.feat_dim();
        for r in records {
            if r.feat_dim() != dim {
                return Err(Error::Validation {
                    video_id: r.video_id.clone(),
                    message: format!("feature dim {} differs from corpus dim {dim}", r.feat_dim()),
                });
            }
        }
    }
    Ok(())
}

/// Load every record of a manifest, failing on the first bad one.
pub fn load_manifest(path: &Path) -> Result<Vec<VideoRecord>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let records = parse_lines(path)?
        .into_iter()
        .map(|(_, line)| into_record(base, line))
        .collect::<Result<Vec<_>>>()?;
    check_dims(&records)?;
    Ok(records)
}

/// Load what can be loaded; per-record failures are returned alongside.
///
/// Syntax errors still abort, since a malformed line has no trustworthy video id.
pub fn load_manifest_partial(path: &Path) -> Result<(Vec<VideoRecord>, Vec<Error>)> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (_, line) in parse_lines(path)? {
        match into_record(base, line) {
            Ok(r) => ok.push(r),
            Err(e) => failed.push(e),
        }
    }
    check_dims(&ok)?;
    Ok((ok, failed))
}

/// Write records as a manifest plus one feature file per stream under `features/`.
pub fn write_manifest(path: &Path, records: &[VideoRecord]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let feat_dir = base.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut out = Vec::new();
    for r in records {
        let rel = format!("features/{}.bin", r.video_id);
        write_features(&base.join(&rel), &r.frame_features)?;
        let (ego_features, exo_features) = match &r.candidates {
            Some(c) => {
                let g = format!("features/{}.ego.bin", r.video_id);
                let x = format!("features/{}.exo.bin", r.video_id);
                write_features(&base.join(&g), &c.ego)?;
                write_features(&base.join(&x), &c.exo)?;
                (Some(g), Some(x))
            }
            None => (None, None),
        };
        let line = ManifestLine {
            video_id: r.video_id.clone(),
            duration_s: r.duration_s,
            fps: r.fps,
            features: rel,
            narrations: r.narrations.clone(),
            views: r.view_track.as_ref().map(|t| {
                t.iter()
                    .map(|s| ViewLine {
                        begin_s: s.begin_s,
                        end_s: s.end_s,
                        kind: s.label.kind,
                        prob: s.label.probability,
                    })
                    .collect()
            }),
            scenario: r.scenario.clone(),
            ego_features,
            exo_features,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;

    fn write_fixture(dir: &Path, ids: &[&str], narration_end: f64) -> PathBuf {
        let mut lines = String::new();
        for id in ids {
            let rel = format!("{id}.bin");
            write_features(&dir.join(&rel), &FeatureMatrix::zeros(40, 4)).unwrap();
            lines.push_str(&format!(
                r#"{{"video_id":"{id}","duration_s":10.0,"fps":4.0,"features":"{rel}","narrations":[{{"text":"cut here","begin_s":1.0,"end_s":{narration_end}}}],"views":[{{"begin_s":0.0,"end_s":10.0,"kind":"exo","prob":1.0}}]}}"#
            ));
            lines.push('\n');
        }
        let p = dir.join("manifest.jsonl");
        std::fs::write(&p, lines).unwrap();
        p
    }

    #[test]
    fn loads_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), &["a"], 2.0);
        let recs = load_manifest(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].num_frames(), 40);
        assert_eq!(recs[0].narrations[0].text, "cut here");
    }

    #[test]
    fn reversed_narration_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), &["a"], 1.0);
        match load_manifest(&p) {
            Err(Error::Validation { video_id, .. }) => assert_eq!(video_id, "a"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_feature_file_names_the_video() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), &["a", "b", "c"], 2.0);
        std::fs::remove_file(dir.path().join("b.bin")).unwrap();
        match load_manifest(&p) {
            Err(Error::MissingFeatures { video_id, .. }) => assert_eq!(video_id, "b"),
            other => panic!("expected missing features, got {other:?}"),
        }
        let (ok, failed) = load_manifest_partial(&p).unwrap();
        assert_eq!(ok.iter().map(|r| r.video_id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(failed.len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), &["a"], 2.0);
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("{\"video_id\": 3}\n");
        std::fs::write(&p, text).unwrap();
        match load_manifest(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_dims_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), &["a", "b"], 2.0);
        write_features(&dir.path().join("b.bin"), &FeatureMatrix::zeros(40, 5)).unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Validation { .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), &["a", "b"], 2.5);
        let recs = load_manifest(&p).unwrap();
        let out = dir.path().join("copy").join("m.jsonl");
        std::fs::create_dir_all(out.parent().unwrap()).unwrap();
        write_manifest(&out, &recs).unwrap();
        assert_eq!(load_manifest(&out).unwrap(), recs);
    }
}
