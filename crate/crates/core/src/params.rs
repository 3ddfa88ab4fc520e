//! Named parameter tensors and their binding into a [`Graph`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diff::{Gradients, Graph, Tensor, Var};
use crate::{Error, Result};

/// Optimiser group. Frozen tensors enter the graph as constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Frozen,
    /// Disentangler weights.
    Module,
    /// Low-rank adapter factors inside the encoder.
    Adapter,
    /// Box-refinement head.
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    pub group: ParamGroup,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor, group: ParamGroup) {
        self.params.insert(name.to_string(), Param { value, group });
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn count_values(&self, group: ParamGroup) -> usize {
        self.params
            .values()
            .filter(|p| p.group == group)
            .map(|p| p.value.len())
            .sum()
    }

    /// Places every tensor in `g`; groups accepted by `trainable` become
    /// trainable leaves, everything else constants.
    pub fn bind(&self, g: &mut Graph, trainable: impl Fn(ParamGroup) -> bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, p)| {
                let v = if p.group != ParamGroup::Frozen && trainable(p.group) {
                    g.param(p.value.clone())
                } else {
                    g.constant(p.value.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Checks that `other` has the same names, shapes and groups.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        for (k, p) in &self.params {
            match other.params.get(k) {
                None => return Err(Error::IncompatibleCheckpoint(alloc::format!("missing parameter `{k}`"))),
                Some(q) if q.value.shape() != p.value.shape() => {
                    return Err(Error::IncompatibleCheckpoint(alloc::format!(
                        "parameter `{k}` has shape {:?}, expected {:?}",
                        q.value.shape(),
                        p.value.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(k) = other.params.keys().find(|k| !self.params.contains_key(*k)) {
            return Err(Error::IncompatibleCheckpoint(alloc::format!("unexpected parameter `{k}`")));
        }
        Ok(())
    }
}

/// Parameter name to graph variable.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Gradients of every trainable parameter, by name.
    pub fn collect(&self, grads: &Gradients) -> Vec<(String, Tensor)> {
        self.vars
            .iter()
            .filter_map(|(k, v)| grads.get(*v).map(|t| (k.clone(), t.clone())))
            .collect()
    }
}
