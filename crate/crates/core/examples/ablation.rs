//! Train one detector per input combination on a grammar whose cues are split
//! across frames, past narrations and the next narration.

use swav::data::WindowConfig;
use swav::detector::{build_samples, build_vocab, train_detector_samples};
use swav::eval::{balanced_report, ApMode, EvalInstance};
use swav::model::{InputMask, ModelConfig, ModelInput, SwitchModel};
use swav::synth::{generate_corpus, SwitchGrammar};
use swav::train::TrainConfig;

fn main() -> anyhow::Result<()> {
    let grammar = SwitchGrammar::split_cues();
    let corpus = generate_corpus(&grammar, 80, 5)?;
    let (train_recs, test_recs) = corpus.records.split_at(60);
    let window = WindowConfig {
        past_frames_s: 4.0,
        past_narrations_s: 16.0,
        frame_rate: 2.0,
        ..WindowConfig::default()
    };
    let train = build_samples(train_recs, &window, 2.0)?;
    let test = build_samples(test_recs, &window, 2.0)?;
    let inst: Vec<EvalInstance> = test.iter().map(EvalInstance::of).collect();

    let both = |a: InputMask, b: InputMask| InputMask {
        frames: a.frames || b.frames,
        past_narrations: a.past_narrations || b.past_narrations,
        next_narration: a.next_narration || b.next_narration,
        candidates: false,
    };
    let masks = [
        InputMask::ALL,
        both(InputMask::only_frames(), InputMask::only_past_narrations()),
        both(InputMask::only_frames(), InputMask::only_next_narration()),
        both(InputMask::only_past_narrations(), InputMask::only_next_narration()),
        InputMask::only_frames(),
        InputMask::only_past_narrations(),
        InputMask::only_next_narration(),
    ];
    let mut cfg = ModelConfig::desk(grammar.feat_dim);
    cfg.aggregator.model_dim = 32;
    cfg.aggregator.ffn_dim = 64;
    cfg.head.hidden_dims = vec![32, 16];
    for mask in masks {
        let mut m = SwitchModel::new_detector(cfg.clone(), build_vocab(train_recs))?;
        let tc = TrainConfig {
            epochs: 6,
            patience: None,
            mask,
            ..TrainConfig::default()
        };
        train_detector_samples(&mut m, &train, &[], &tc)?;
        let preds = test.iter().map(|s| m.forward(s, mask)).collect::<Result<Vec<_>, _>>()?;
        let b = balanced_report(&preds, &inst, ApMode::Macro)?.balanced.unwrap();
        let len = m.assemble_tokens(ModelInput::Detector(&test[0]), mask)?.roles.len();
        println!("{:<8} bal-acc {:.3}  bal-ap {:.3}  ({len} tokens)", mask.label(), b.accuracy, b.ap.unwrap());
    }
    Ok(())
}
