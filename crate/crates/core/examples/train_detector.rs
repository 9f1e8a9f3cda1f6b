//! Pseudo-label a synthetic corpus and train a view-switch detector on it.

use std::time::Instant;

use swav::data::WindowConfig;
use swav::detector::{build_samples, build_vocab, train_detector_samples};
use swav::eval::{balanced_report, ApMode, EvalInstance};
use swav::model::{InputMask, ModelConfig, SwitchModel};
use swav::pseudo_label::{pseudo_label_corpus, PseudoLabelMode, ShotConfig};
use swav::synth::{generate_corpus, SwitchGrammar};
use swav::train::TrainConfig;

fn main() -> anyhow::Result<()> {
    let grammar = SwitchGrammar::deterministic_cue();
    let corpus = generate_corpus(&grammar, 80, 1)?;
    let (train_recs, val_recs) = corpus.records.split_at(64);

    // Train on pseudo-labels, validate against the true tracks.
    let labels = pseudo_label_corpus(train_recs, &corpus.oracle, PseudoLabelMode::ShotLevel, &ShotConfig::default())?;
    let pseudo: Vec<_> = labels.iter().zip(train_recs).map(|(l, r)| l.apply(r)).collect();

    let window = WindowConfig {
        past_frames_s: 4.0,
        past_narrations_s: 16.0,
        frame_rate: 2.0,
        ..WindowConfig::default()
    };
    let train = build_samples(&pseudo, &window, window.delta_s)?;
    let val = build_samples(val_recs, &window, window.delta_s)?;
    println!("{} training samples, {} validation samples", train.len(), val.len());

    let mut model = SwitchModel::new_detector(ModelConfig::desk(grammar.feat_dim), build_vocab(train_recs))?;
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let history = train_detector_samples(&mut model, &train, &val, &cfg)?;
    for e in &history.epochs {
        println!(
            "epoch {:2}  train loss {:.4}  val loss {:.4}  val bal-acc {:.3}",
            e.epoch,
            e.train_loss,
            e.val_loss.unwrap_or(f64::NAN),
            e.val_balanced_accuracy.unwrap_or(f64::NAN)
        );
    }
    println!("trained in {:.1?}", start.elapsed());

    let preds = val.iter().map(|s| model.forward(s, InputMask::ALL)).collect::<Result<Vec<_>, _>>()?;
    let inst: Vec<EvalInstance> = val.iter().map(EvalInstance::of).collect();
    let report = balanced_report(&preds, &inst, ApMode::Macro)?;
    println!("{}", serde_json::to_string_pretty(&report.balanced)?);
    Ok(())
}
