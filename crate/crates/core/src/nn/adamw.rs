use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Array2::zeros(p.value.dim()))
                .collect()
        };
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let (trainable, decay) = {
                let p = store.get(id);
                (p.trainable, p.decay)
            };
            if !trainable {
                continue;
            }
            let g = grads.get(id);
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let w = store.value_mut(id);
            if decay && c.weight_decay > 0.0 {
                *w *= 1.0 - c.lr * c.weight_decay;
            }
            ndarray::Zip::from(w)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *w -= c.lr * mh / (vh.sqrt() + c.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn minimizes_a_quadratic_and_skips_frozen() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[3.0, -2.0]], true, false);
        let frozen = store.add("f", array![[1.0]], false, true);
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.1,
                ..Default::default()
            },
            &store,
        );
        for _ in 0..500 {
            let mut grads = Grads::zeros_like(&store);
            let g = store.value(w) * 2.0;
            grads.accumulate(w, &g);
            grads.accumulate(frozen, &array![[5.0]]);
            opt.step(&mut store, &grads);
        }
        assert!(store.value(w).iter().all(|v| v.abs() < 1e-2));
        assert_eq!(store.value(frozen)[[0, 0]], 1.0);
    }
}
