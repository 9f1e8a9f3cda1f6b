//! Pretrain a detector on pseudo-labels, then fine-tune the view selector on
//! a few hundred best-view labels, with and without pretraining.

use swav::data::{extract_selector_sample, VideoRecord, WindowConfig};
use swav::detector::{build_samples, build_vocab, sample_times, train_detector_samples};
use swav::eval::{balanced_report, ApMode, EvalInstance};
use swav::model::{InputMask, ModelConfig, ModelInput, SwitchModel};
use swav::pseudo_label::{pseudo_label_corpus, PseudoLabelMode, ShotConfig};
use swav::selector::{finetune_selector, init_from_detector, selector_from_scratch, JointFinetuneConfig, LimitedLabelSet};
use swav::synth::{generate_corpus, SwitchGrammar};
use swav::train::TrainConfig;

fn labels(records: &[VideoRecord], w: &WindowConfig) -> anyhow::Result<LimitedLabelSet> {
    let mut samples = Vec::new();
    for r in records {
        for t in sample_times(r, w, 2.0) {
            samples.push(extract_selector_sample(r, t, w)?);
        }
    }
    Ok(LimitedLabelSet { samples })
}

fn score(m: &SwitchModel, test: &LimitedLabelSet) -> anyhow::Result<f64> {
    let preds = test
        .samples
        .iter()
        .map(|s| m.predict(ModelInput::Selector(s), InputMask::ALL))
        .collect::<Result<Vec<_>, _>>()?;
    let inst: Vec<_> = test.samples.iter().map(|s| EvalInstance::of(&s.base)).collect();
    Ok(balanced_report(&preds, &inst, ApMode::Macro)?.balanced.unwrap().accuracy)
}

fn main() -> anyhow::Result<()> {
    let grammar = SwitchGrammar::mixed().with_multi_view();
    let window = WindowConfig {
        past_frames_s: 4.0,
        past_narrations_s: 16.0,
        frame_rate: 2.0,
        ..WindowConfig::default()
    };
    let mut model_cfg = ModelConfig::desk(grammar.feat_dim);
    model_cfg.aggregator.model_dim = 32;
    model_cfg.aggregator.ffn_dim = 64;
    model_cfg.head.hidden_dims = vec![32, 16];

    let unlabeled = generate_corpus(&grammar, 100, 1)?;
    let sets = pseudo_label_corpus(&unlabeled.records, &unlabeled.oracle, PseudoLabelMode::ShotLevel, &ShotConfig::default())?;
    let pseudo: Vec<_> = sets.iter().zip(&unlabeled.records).map(|(s, r)| s.apply(r)).collect();
    let vocab = build_vocab(&unlabeled.records);
    let mut detector = SwitchModel::new_detector(model_cfg.clone(), vocab.clone())?;
    let pre = TrainConfig {
        epochs: 10,
        patience: None,
        ..TrainConfig::default()
    };
    let h = train_detector_samples(&mut detector, &build_samples(&pseudo, &window, 2.0)?, &[], &pre)?;
    println!("pretext training loss {:.3}", h.epochs.last().unwrap().train_loss);

    let labeled = generate_corpus(&grammar, 60, 2)?;
    let pool = labels(&labeled.records[..40], &window)?;
    let test = labels(&labeled.records[40..], &window)?;
    let train = pool.subsample(300, 0);
    train.check_disjoint(&test)?;

    let sel_cfg = model_cfg.with_candidates(window.frames_per_delta());
    let ft = TrainConfig {
        epochs: 5,
        patience: None,
        ..TrainConfig::default()
    };
    let mut pretrained = init_from_detector(&detector, sel_cfg.clone())?;
    finetune_selector(&mut pretrained, &train, None, &ft, None)?;
    let mut joint = init_from_detector(&detector, sel_cfg.clone())?;
    finetune_selector(&mut joint, &train, None, &ft, Some(&JointFinetuneConfig::default()))?;
    let mut scratch = selector_from_scratch(sel_cfg, vocab)?;
    finetune_selector(&mut scratch, &train, None, &ft, None)?;

    println!("{} labels, {} test instances", train.len(), test.len());
    println!("pretrained          {:.3}", score(&pretrained, &test)?);
    println!("pretrained + joint  {:.3}", score(&joint, &test)?);
    println!("from scratch        {:.3}", score(&scratch, &test)?);
    Ok(())
}
