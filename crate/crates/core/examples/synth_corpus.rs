//! Generate a small corpus, write it as a manifest, and read it back.

use swav::data::{load_manifest, write_manifest, ViewKind};
use swav::synth::{generate_corpus, SwitchGrammar};

fn main() -> anyhow::Result<()> {
    let grammar = SwitchGrammar::mixed().with_multi_view();
    let corpus = generate_corpus(&grammar, 5, 42)?;

    for r in &corpus.records {
        let track = r.view_track.as_ref().unwrap();
        let ego_s: f64 = track
            .iter()
            .filter(|s| s.label.kind == ViewKind::Ego)
            .map(|s| s.end_s - s.begin_s)
            .sum();
        println!(
            "{}  {:5.1} s  {:2} shots  {:4.1}% ego  {} narrations  scenario {}",
            r.video_id,
            r.duration_s,
            track.len(),
            100.0 * ego_s / r.duration_s,
            r.narrations.len(),
            r.scenario.as_deref().unwrap_or("-")
        );
    }
    for n in corpus.records[0].narrations.iter().take(4) {
        println!("  [{:5.1}, {:5.1}] {}", n.begin_s, n.end_s, n.text);
    }
    println!("{} cue rules fired", corpus.cue_events.len());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("manifest.jsonl");
    write_manifest(&path, &corpus.records)?;
    let back = load_manifest(&path)?;
    assert_eq!(back, corpus.records);
    println!("manifest round trip ok ({} records)", back.len());
    Ok(())
}
