use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Component, ModelConfig, SwitchModel};
use crate::error::{Error, Result};
use crate::nn::TensorRecord;
use crate::text::Vocab;
use crate::train::TrainHistory;

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: config, vocabulary and every tensor, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub component: Component,
    pub config: ModelConfig,
    pub vocab: BTreeMap<String, usize>,
    pub tensors: Vec<TensorRecord>,
    #[serde(default)]
    pub history: Option<TrainHistory>,
}

impl Checkpoint {
    pub fn from_model(model: &SwitchModel, history: Option<TrainHistory>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            component: model.component,
            config: model.cfg.clone(),
            vocab: model.vocab.as_map().clone(),
            tensors: model.store.to_records(),
            history,
        }
    }

    pub fn into_model(self) -> Result<SwitchModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        let vocab = Vocab::from_map(self.vocab)?;
        let mut model = SwitchModel::build(self.config, vocab, self.component)?;
        model.store.load_records(&self.tensors)?;
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, model: &SwitchModel, history: Option<TrainHistory>) -> Result<()> {
    let ck = Checkpoint::from_model(model, history);
    let json = serde_json::to_string(&ck)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Load a checkpoint; `expect` rejects a model whose config differs.
pub fn load_checkpoint(path: &Path, expect: Option<&ModelConfig>) -> Result<(SwitchModel, Option<TrainHistory>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if let Some(cfg) = expect {
        if cfg != &ck.config {
            return Err(Error::ConfigMismatch(
                "checkpoint was trained with a different model config".into(),
            ));
        }
    }
    let history = ck.history.clone();
    Ok((ck.into_model()?, history))
}
