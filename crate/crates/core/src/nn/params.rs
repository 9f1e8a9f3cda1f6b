use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    /// Frozen tensors are never touched by the optimizer.
    pub trainable: bool,
    /// Whether decoupled weight decay applies (weights yes, biases/tables no).
    pub decay: bool,
}

/// Named tensors owned by one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: Array2<f64>,
        trainable: bool,
        decay: bool,
    ) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        self.by_name.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value,
            trainable,
            decay,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn num_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        self.params
            .iter()
            .map(|p| TensorRecord {
                name: p.name.clone(),
                shape: [p.value.nrows(), p.value.ncols()],
                trainable: p.trainable,
                data: p.value.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrite values from serialized tensors; names and shapes must match exactly.
    pub fn load_records(&mut self, records: &[TensorRecord]) -> Result<()> {
        if records.len() != self.params.len() {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint holds {} tensors, model expects {}",
                records.len(),
                self.params.len()
            )));
        }
        for rec in records {
            let id = self
                .id(&rec.name)
                .ok_or_else(|| Error::ConfigMismatch(format!("unknown tensor {}", rec.name)))?;
            let p = &mut self.params[id.0];
            if [p.value.nrows(), p.value.ncols()] != rec.shape {
                return Err(Error::ConfigMismatch(format!(
                    "tensor {} has shape {:?}, model expects {:?}",
                    rec.name,
                    rec.shape,
                    p.value.dim()
                )));
            }
            p.value = Array2::from_shape_vec((rec.shape[0], rec.shape[1]), rec.data.clone())
                .map_err(|e| Error::ConfigMismatch(e.to_string()))?;
            p.trainable = rec.trainable;
        }
        Ok(())
    }
}

/// Serialized tensor used by checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub trainable: bool,
    pub data: Vec<f64>,
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads {
    bufs: Vec<Array2<f64>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            bufs: store
                .params
                .iter()
                .map(|p| Array2::zeros(p.value.dim()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.bufs[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Array2<f64>) {
        self.bufs[id.0] += g;
    }

    pub fn accumulate_rows(&mut self, id: ParamId, rows: &[usize], g: &Array2<f64>) {
        let buf = &mut self.bufs[id.0];
        for (r, &i) in rows.iter().enumerate() {
            let mut dst = buf.row_mut(i);
            dst += &g.row(r);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for b in &mut self.bufs {
            *b *= c;
        }
    }

    pub fn zero(&mut self) {
        for b in &mut self.bufs {
            b.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bufs.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Xavier-uniform weight matrix.
pub fn xavier_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

/// Zero-mean uniform table with standard deviation `std`.
pub fn scaled_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let a = std * 3f64.sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}
