//! Mini-batch AdamW training with early stopping on validation balanced accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ViewKind;
use crate::error::{Error, Result};
use crate::model::{InputMask, ModelInput, Prediction, SwitchModel};
use crate::nn::{AdamW, AdamWConfig, Grads};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Stop after this many epochs without a better validation score.
    pub patience: Option<usize>,
    /// Input groups seen during training and evaluation.
    pub mask: InputMask,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 32,
            optimizer: AdamWConfig::default(),
            patience: Some(4),
            mask: InputMask::ALL,
        }
    }
}

/// One supervised example; `aux` is an optional second target weighted by `alpha`.
#[derive(Debug, Clone, Copy)]
pub struct TrainExample<'a> {
    pub input: ModelInput<'a>,
    pub target: ViewKind,
    pub aux: Option<(ViewKind, f64)>,
}

impl<'a> TrainExample<'a> {
    pub fn new(input: impl Into<ModelInput<'a>>, target: ViewKind) -> Self {
        Self {
            input: input.into(),
            target,
            aux: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean per-class recall of hard predictions; classes absent from `targets` are skipped.
pub fn balanced_accuracy_of(preds: &[ViewKind], targets: &[ViewKind]) -> f64 {
    let mut hit = [0usize; 2];
    let mut tot = [0usize; 2];
    for (p, t) in preds.iter().zip(targets) {
        tot[t.index()] += 1;
        if p == t {
            hit[t.index()] += 1;
        }
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| tot[c] > 0)
        .map(|c| hit[c] as f64 / tot[c] as f64)
        .collect();
    recalls.iter().sum::<f64>() / recalls.len().max(1) as f64
}

/// Predictions for a batch of inputs.
pub fn predict_all(model: &SwitchModel, inputs: &[ModelInput<'_>], mask: InputMask) -> Result<Vec<Prediction>> {
    inputs.iter().map(|&i| model.predict(i, mask)).collect()
}

fn evaluate(model: &SwitchModel, val: &[TrainExample<'_>], mask: InputMask) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(val.len());
    let mut targets = Vec::with_capacity(val.len());
    for ex in val {
        let p = model.predict(ex.input, mask)?;
        loss += crate::model::loss_detector(&p, ex.target);
        preds.push(p.kind());
        targets.push(ex.target);
    }
    Ok((loss / val.len() as f64, balanced_accuracy_of(&preds, &targets)))
}

/// Train in place. With a validation set the best-scoring parameters are restored at the end.
pub fn train(
    model: &mut SwitchModel,
    train_set: &[TrainExample<'_>],
    val_set: &[TrainExample<'_>],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if train_set.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.optimizer.clone(), &model.store);
    let mut grads = Grads::zeros_like(&model.store);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64, crate::nn::ParamStore)> = None;
    let mut since_best = 0usize;
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            grads.zero();
            let w = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &train_set[i];
                let l = model
                    .accumulate_gradients(ex.input, ex.target, ex.aux, cfg.mask, w, &mut grads)
                    .map_err(|e| match e {
                        Error::NonFinite(_) => Error::Divergence {
                            epoch,
                            step,
                            loss: f64::NAN,
                        },
                        e => e,
                    })?;
                batch_loss += l * w;
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    loss: batch_loss,
                });
            }
            opt.step(&mut model.store, &grads);
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let mut rec = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_balanced_accuracy: None,
        };
        if !val_set.is_empty() {
            let (vl, vb) = evaluate(model, val_set, cfg.mask)?;
            rec.val_loss = Some(vl);
            rec.val_balanced_accuracy = Some(vb);
            let better = match &best {
                None => true,
                Some((bb, bl, _)) => vb > *bb + 1e-12 || ((vb - bb).abs() <= 1e-12 && vl < *bl),
            };
            if better {
                best = Some((vb, vl, model.store.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            history.best_epoch = epoch;
        }
        history.epochs.push(rec);
        if let Some(p) = cfg.patience {
            if !val_set.is_empty() && since_best >= p {
                history.stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    if let Some((_, _, store)) = best {
        model.store = store;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_accuracy_by_hand() {
        use ViewKind::*;
        let t = [Ego, Ego, Ego, Exo];
        let p = [Ego, Exo, Exo, Exo];
        // (1/3 + 1) / 2
        assert!((balanced_accuracy_of(&p, &t) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(balanced_accuracy_of(&[Exo; 4], &t), 0.5);
    }
}
