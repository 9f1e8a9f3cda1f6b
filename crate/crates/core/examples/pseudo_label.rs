//! Shot-level against clip-level pseudo-labels under a noisy clip classifier.

use swav::pseudo_label::{detect_shots, pseudo_label_video, PseudoLabelMode, ShotConfig};
use swav::synth::{generate_corpus, SwitchGrammar};

fn main() -> anyhow::Result<()> {
    let mut grammar = SwitchGrammar::mixed();
    grammar.boundary_noise = 0.2;
    let corpus = generate_corpus(&grammar, 20, 7)?;
    let cfg = ShotConfig::default();

    let r = &corpus.records[0];
    let shots = detect_shots(r, &cfg)?;
    println!("{}: {} detected shots, {} true spans", r.video_id, shots.len(), r.view_track.as_ref().unwrap().len());
    let set = pseudo_label_video(r, &corpus.oracle, PseudoLabelMode::ShotLevel, &cfg)?;
    for s in set.shots.iter().take(5) {
        println!(
            "  [{:5.1}, {:5.1}) {:?} p={:.2} from {} clips",
            s.begin_s,
            s.end_s,
            s.label.kind,
            s.label.probability,
            s.clip_probs.len()
        );
    }

    let (mut shot, mut clip) = (0.0, 0.0);
    for r in &corpus.records {
        shot += pseudo_label_video(r, &corpus.oracle, PseudoLabelMode::ShotLevel, &cfg)?.frame_accuracy(r).unwrap();
        clip += pseudo_label_video(r, &corpus.oracle, PseudoLabelMode::ClipLevel, &cfg)?.frame_accuracy(r).unwrap();
    }
    let n = corpus.records.len() as f64;
    println!("mean frame accuracy: shot-level {:.4}, clip-level {:.4}", shot / n, clip / n);
    Ok(())
}
