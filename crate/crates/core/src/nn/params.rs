//! Named, layer-addressable learnable state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Role of a parameter; only `Weight` entries enter the L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    Gain,
    Shift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Every tensor is registered exactly once, so a parameter can never alias another.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter {name}"
        );
        self.params.push(Param { name, kind, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Sum of squared weight-matrix entries (biases and normalization excluded).
    pub fn weight_sum_squares(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Weight)
            .map(|p| p.value.sum_squares())
            .sum()
    }

    /// Overwrite values from `other`, matching by name and shape.
    pub fn load_from(&mut self, other: &[(String, Tensor)]) -> Result<()> {
        if other.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                self.params.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let (_, t) = other
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}

/// Symmetric uniform init with limit sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, fan_out: usize, fan_in: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![fan_out, fan_in], data).expect("positive extents")
}
