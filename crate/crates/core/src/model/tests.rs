use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{extract_sample, extract_selector_sample};
use crate::testutil::{small_window, toy_record};

fn vocab_for(rec: &crate::data::VideoRecord) -> Vocab {
    Vocab::build(rec.narrations.iter().map(|n| n.text.as_str()))
}

fn desk_model(feat_dim: usize) -> (SwitchModel, crate::data::VideoRecord) {
    let rec = toy_record(feat_dim, 1);
    let m = SwitchModel::new_detector(ModelConfig::desk(feat_dim), vocab_for(&rec)).unwrap();
    (m, rec)
}

#[test]
fn output_is_a_distribution() {
    let (m, rec) = desk_model(6);
    for t in [2.0, 6.0, 8.5, 13.0] {
        let s = extract_sample(&rec, t, &small_window()).unwrap();
        let p = m.forward(&s, InputMask::ALL).unwrap();
        assert!((p.probs[0] + p.probs[1] - 1.0).abs() < 1e-12);
        assert!(p.probs.iter().all(|&q| q > 0.0 && q < 1.0));
        assert_eq!(p.predicted.probability, p.probs[p.kind().index()]);
    }
}

#[test]
fn fresh_model_loss_is_near_ln2() {
    let (m, rec) = desk_model(6);
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for k in 2..16 {
        let s = extract_sample(&rec, k as f64, &small_window()).unwrap();
        preds.push(m.forward(&s, InputMask::ALL).unwrap());
        targets.push(s.target.kind);
    }
    let l = mean_loss(&preds, &targets);
    assert!((l - std::f64::consts::LN_2).abs() < 0.15, "loss {l}");
}

#[test]
fn token_order_does_not_matter_when_positions_travel_along() {
    let (m, rec) = desk_model(6);
    let s = extract_sample(&rec, 9.0, &small_window()).unwrap();
    let seq = m.assemble_tokens(ModelInput::Detector(&s), InputMask::ALL).unwrap();
    let direct = m.forward(&s, InputMask::ALL).unwrap();
    assert_eq!(seq.roles.last(), Some(&Role::Cls));
    let via_tokens = m.predict_tokens(&seq).unwrap();
    assert!((direct.logits[0] - via_tokens.logits[0]).abs() < 1e-12);

    let n = seq.roles.len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut perm: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut rng);
    let permuted = TokenSequence {
        vectors: Mat::from_shape_fn(seq.vectors.dim(), |(r, c)| seq.vectors[[perm[r], c]]),
        roles: perm.iter().map(|&i| seq.roles[i]).collect(),
        positions: perm.iter().map(|&i| seq.positions[i]).collect(),
        cls_index: perm.iter().position(|&i| i == seq.cls_index).unwrap(),
    };
    let p = m.predict_tokens(&permuted).unwrap();
    for c in 0..2 {
        assert!((p.logits[c] - direct.logits[c]).abs() < 1e-9);
    }
}

#[test]
fn swapping_view_semantics_swaps_outputs() {
    let (m, rec) = desk_model(6);
    let s = extract_sample(&rec, 7.0, &small_window()).unwrap();
    let mut m2 = m.clone();
    let vt = m2.bank.view_table;
    let tbl = m2.store.value_mut(vt);
    let r0 = tbl.row(0).to_owned();
    let r1 = tbl.row(1).to_owned();
    tbl.row_mut(0).assign(&r1);
    tbl.row_mut(1).assign(&r0);
    let (w, b) = m2.output_layer();
    for id in [w, b] {
        let t = m2.store.value_mut(id);
        let c0 = t.column(0).to_owned();
        let c1 = t.column(1).to_owned();
        t.column_mut(0).assign(&c1);
        t.column_mut(1).assign(&c0);
    }
    let mut s2 = s.clone();
    for v in &mut s2.past_frame_views {
        v.kind = v.kind.other();
    }
    for p in &mut s2.past_narrations {
        p.view.kind = p.view.kind.other();
    }
    let a = m.forward(&s, InputMask::ALL).unwrap();
    let b = m2.forward(&s2, InputMask::ALL).unwrap();
    assert!((a.probs[0] - b.probs[1]).abs() < 1e-12);
    assert!((a.probs[1] - b.probs[0]).abs() < 1e-12);
}

#[test]
fn frame_token_is_the_sum_of_its_parts() {
    let (m, rec) = desk_model(6);
    let f = rec.frame_features.row(10).to_vec();
    let tok = m.encode_frame_token(&f, ViewKind::Ego, 3.27).unwrap();
    let w = m.store.value(m.bank.frame_w);
    let b = m.store.value(m.bank.frame_b);
    let v = m.store.value(m.bank.view_table);
    let tt = m.store.value(m.bank.temporal_table);
    for c in 0..m.model_dim() {
        let mut e = b[[0, c]];
        for (k, x) in f.iter().enumerate() {
            e += *x as f64 * w[[k, c]];
        }
        e += v[[0, c]] + tt[[32, c]];
        assert!((tok[c] - e).abs() < 1e-12);
    }

    let t1 = m.encode_past_narration_token("take a closer look", ViewKind::Exo, 1.0).unwrap();
    let t2 = m.encode_past_narration_token("take a closer look", ViewKind::Exo, 1.05).unwrap();
    assert_eq!(t1, t2);
    assert!(matches!(
        m.encode_past_narration_token("  ", ViewKind::Exo, 1.0),
        Err(Error::EmptyNarrationText)
    ));
    // Empty next narration falls back to the null row.
    let nul = m.encode_next_narration_token("", 0.0);
    let nt = m.store.value(m.bank.null_text);
    for c in 0..m.model_dim() {
        assert!((nul[c] - nt[[0, c]] - tt[[0, c]]).abs() < 1e-12);
    }
}

#[test]
fn wrong_feature_dim_is_reported() {
    let (m, _) = desk_model(6);
    let rec = toy_record(5, 2);
    let s = extract_sample(&rec, 7.0, &small_window()).unwrap();
    assert!(matches!(
        m.forward(&s, InputMask::ALL),
        Err(Error::DimMismatch { expected: 6, got: 5 })
    ));
}

#[test]
fn input_masks_change_the_sequence() {
    let (m, rec) = desk_model(6);
    let s = extract_sample(&rec, 9.0, &small_window()).unwrap();
    let all = m.assemble_tokens(ModelInput::Detector(&s), InputMask::ALL).unwrap();
    let f = m.assemble_tokens(ModelInput::Detector(&s), InputMask::only_frames()).unwrap();
    assert_eq!(f.roles.iter().filter(|r| **r == Role::Frame).count(), s.past_frame_features.rows());
    assert_eq!(f.roles.len(), s.past_frame_features.rows() + 1);
    assert!(all.roles.contains(&Role::NextNarr));
    assert_eq!(InputMask::ALL.label(), "F+N+N'");
}

fn max_rel_err(model: &SwitchModel, input: ModelInput<'_>, target: ViewKind, aux: Option<(ViewKind, f64)>) -> Vec<(String, f64)> {
    let mut grads = Grads::zeros_like(&model.store);
    model
        .accumulate_gradients(input, target, aux, InputMask::ALL, 1.0, &mut grads)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let mut out = Vec::new();
    let ids: Vec<ParamId> = model.store.ids().collect();
    for id in ids {
        if !model.store.get(id).trainable {
            continue;
        }
        let g = grads.get(id);
        let (r, c) = g.dim();
        // Largest entries plus a few random ones.
        let mut cells: Vec<(usize, usize)> = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).collect();
        cells.sort_by(|a, b| g[*b].abs().total_cmp(&g[*a].abs()));
        cells.truncate(4);
        for _ in 0..2 {
            cells.push((rng.gen_range(0..r), rng.gen_range(0..c)));
        }
        let mut an = Vec::new();
        let mut nu = Vec::new();
        for &cell in &cells {
            let mut mp = model.clone();
            mp.store.value_mut(id)[cell] += h;
            let lp = mp.example_loss(input, target, aux, InputMask::ALL).unwrap();
            mp.store.value_mut(id)[cell] -= 2.0 * h;
            let lm = mp.example_loss(input, target, aux, InputMask::ALL).unwrap();
            nu.push((lp - lm) / (2.0 * h));
            an.push(g[cell]);
        }
        let diff: f64 = an.iter().zip(&nu).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = an.iter().map(|a| a * a).sum::<f64>().sqrt() + nu.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = if norm < 1e-9 { diff } else { diff / norm };
        out.push((model.store.name(id).to_string(), rel));
    }
    out
}

#[test]
fn gradients_match_finite_differences() {
    let rec = toy_record(4, 5);
    let mut cfg = ModelConfig::tiny(4);
    cfg.encoder.train_text_table = true;
    let m = SwitchModel::new_detector(cfg, vocab_for(&rec)).unwrap();
    let s = extract_sample(&rec, 7.0, &small_window()).unwrap();
    for (name, rel) in max_rel_err(&m, ModelInput::Detector(&s), s.target.kind, Some((ViewKind::Ego, 0.3))) {
        assert!(rel < 1e-4, "{name}: relative error {rel}");
    }
}

#[test]
fn selector_gradients_match_finite_differences() {
    let rec = toy_record(4, 6);
    let cfg = ModelConfig::tiny(4).with_candidates(4);
    let mut cfg = cfg;
    cfg.encoder.candidate_embedding = crate::encoder::CandidateEmbedding::WithViewAndTime;
    let m = SwitchModel::new_selector(cfg, vocab_for(&rec)).unwrap();
    let s = extract_selector_sample(&rec, 11.0, &small_window()).unwrap();
    for (name, rel) in max_rel_err(&m, ModelInput::Selector(&s), s.base.target.kind, None) {
        assert!(rel < 1e-4, "{name}: relative error {rel}");
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (m, rec) = desk_model(6);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.json");
    save_checkpoint(&p, &m, None).unwrap();
    let (m2, _) = load_checkpoint(&p, Some(&m.cfg)).unwrap();
    let s = extract_sample(&rec, 9.0, &small_window()).unwrap();
    assert_eq!(m.forward(&s, InputMask::ALL).unwrap(), m2.forward(&s, InputMask::ALL).unwrap());

    let mut other = m.cfg.clone();
    other.aggregator.num_layers = 3;
    assert!(matches!(load_checkpoint(&p, Some(&other)), Err(Error::ConfigMismatch(_))));
}
