//! Every baseline on one multi-view test set, scored with balanced metrics.

use swav::baselines::{Baseline, BaselineKind, BaselineSpec};
use swav::data::{extract_selector_sample, WindowConfig};
use swav::detector::{build_samples, build_vocab, sample_times, train_detector_samples};
use swav::eval::{balanced_report, ApMode, EvalInstance};
use swav::model::{ModelConfig, ModelInput, SwitchModel};
use swav::synth::{generate_corpus, SwitchGrammar};
use swav::train::TrainConfig;

fn main() -> anyhow::Result<()> {
    let grammar = SwitchGrammar::mixed().with_multi_view();
    let corpus = generate_corpus(&grammar, 40, 11)?;
    let (train_recs, test_recs) = corpus.records.split_at(30);
    let window = WindowConfig {
        past_frames_s: 4.0,
        past_narrations_s: 16.0,
        frame_rate: 2.0,
        ..WindowConfig::default()
    };

    // Retrieval and VN-sim embed through a (briefly trained) detector's encoders.
    let train = build_samples(train_recs, &window, 2.0)?;
    let mut encoder = SwitchModel::new_detector(ModelConfig::desk(grammar.feat_dim), build_vocab(train_recs))?;
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    train_detector_samples(&mut encoder, &train, &[], &cfg)?;

    let mut test = Vec::new();
    for r in test_recs {
        for t in sample_times(r, &window, 2.0) {
            test.push(extract_selector_sample(r, t, &window)?);
        }
    }
    let inst: Vec<EvalInstance> = test.iter().map(|s| EvalInstance::of(&s.base)).collect();
    let index: Vec<_> = train.iter().collect();

    println!("{:<18} {:>8} {:>8} {:>8}", "baseline", "bal-acc", "bal-auc", "bal-ap");
    for kind in BaselineKind::ALL {
        let b = Baseline::build(BaselineSpec::new(kind), Some(&encoder), &index)?;
        let preds = test.iter().map(|s| b.predict(ModelInput::Selector(s))).collect::<Result<Vec<_>, _>>()?;
        let m = balanced_report(&preds, &inst, ApMode::Macro)?.balanced.unwrap();
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!("{:<18} {:>8.3} {:>8} {:>8}", kind.name(), m.accuracy, f(m.auc), f(m.ap));
    }
    Ok(())
}
