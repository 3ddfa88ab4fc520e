use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::params::{ParamGroup, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optimizer.beta", "betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("optimizer.eps", "eps must be positive and weight decay non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One update of every parameter in `grads`; `lr` gives each group's
    /// learning rate (zero freezes the group).
    pub fn update(&mut self, store: &mut ParamStore, grads: &[(String, Tensor)], lr: impl Fn(ParamGroup) -> f64) -> Result<()> {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        for (name, grad) in grads {
            let param = store.get_mut(name)?;
            let rate = lr(param.group);
            if param.group == ParamGroup::Frozen || rate == 0.0 {
                continue;
            }
            if grad.shape() != param.value.shape() {
                return Err(Error::shape("adamw", grad.shape(), param.value.shape()));
            }
            let n = grad.len();
            let mo = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: alloc::vec![0.0; n],
                v: alloc::vec![0.0; n],
            });
            for (((w, &gr), m), v) in param
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(mo.m.iter_mut())
                .zip(mo.v.iter_mut())
            {
                *m = c.beta1 * *m + (1.0 - c.beta1) * gr;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gr * gr;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= rate * (mhat / (libm::sqrt(vhat) + c.eps) + c.weight_decay * *w);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(alloc::vec![1.0, -2.0]), ParamGroup::Module);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        });
        let g = alloc::vec![(String::from("w"), Tensor::vector(alloc::vec![0.5, -3.0]))];
        opt.update(&mut store, &g, |_| 0.1).unwrap();
        let w = store.get("w").unwrap().value.data().to_vec();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 1.9).abs() < 1e-6);
    }
}
