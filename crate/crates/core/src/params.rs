//! Named parameter storage shared by the model, optimiser and checkpoints.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    /// Frozen parameters take part in the forward pass but never receive
    /// gradients or updates.
    pub frozen: bool,
}

/// An ordered collection of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    entries: Vec<Param>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// Per-parameter gradients, aligned with [`Parameters`] order. `None` for
/// frozen parameters and parameters the loss did not reach.
pub type Gradients = Vec<Option<Vec<f64>>>;

/// Tape variables for every parameter, aligned with [`Parameters`] order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, idx: usize) -> Var {
        self.vars[idx]
    }
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds the name index, needed after deserialising.
    pub fn from_entries(entries: Vec<Param>) -> Result<Self> {
        let mut p = Parameters::new();
        for e in entries {
            p.insert(&e.name, e.tensor, e.frozen)?;
        }
        Ok(p)
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor, frozen: bool) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        let idx = self.entries.len();
        self.entries.push(Param {
            name: name.to_string(),
            tensor,
            frozen,
        });
        self.index.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.entries[i].tensor)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::config(format!("missing parameter {name:?}")))
    }

    pub fn param(&self, idx: usize) -> &Param {
        &self.entries[idx]
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.entries[idx]
    }

    /// Freezes or unfreezes every parameter whose name starts with `prefix`.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) -> usize {
        let mut n = 0;
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with(prefix)) {
            e.frozen = frozen;
            n += 1;
        }
        n
    }

    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| !e.frozen)
            .map(|e| e.tensor.numel())
            .sum()
    }

    /// Places every parameter on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone().with_requires_grad(!e.frozen)))
            .collect();
        Bound { vars }
    }

    /// Reads the gradients left on `tape` by a backward pass.
    pub fn collect_grads(&self, tape: &Tape, bound: &Bound) -> Gradients {
        self.entries
            .iter()
            .zip(&bound.vars)
            .map(|(e, &v)| {
                if e.frozen {
                    None
                } else {
                    tape.grad(v).map(<[f64]>::to_vec)
                }
            })
            .collect()
    }
}
