//! Named trainable parameters and the registry that owns them.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::error::{Result, TensorError};
use crate::rng::{uniform_vec, SeededRng};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered registry of uniquely named parameters. Registration order is the
/// iteration order, which keeps optimizer updates and checkpoints
/// deterministic.
#[derive(Default, Debug)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<Tensor> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Usage(format!("duplicate parameter name `{name}`")));
        }
        tensor.set_requires_grad(true);
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter {
            name,
            tensor: tensor.clone(),
        });
        Ok(tensor)
    }

    /// Centered uniform initialization with bound `1/sqrt(fan_in)`.
    pub fn uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut SeededRng,
    ) -> Result<Tensor> {
        let n = shape.iter().product();
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.register(name, Tensor::new(uniform_vec(rng, n, bound), shape)?)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<Tensor> {
        self.register(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Parameter> + 'a {
        self.params.iter().filter(move |p| p.name.starts_with(prefix))
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(|p| p.tensor.zero_grad());
    }

    /// Sets gradient tracking for every parameter whose name starts with one
    /// of `prefixes`.
    pub fn set_trainable(&self, prefixes: &[&str], on: bool) {
        for p in &self.params {
            if prefixes.iter().any(|pre| p.name.starts_with(pre)) {
                p.tensor.set_requires_grad(on);
            }
        }
    }

    /// Disables tracking on every parameter until the guard drops, then
    /// restores each parameter's previous flag.
    pub fn no_grad(&self) -> NoGradGuard<'_> {
        let saved = self.params.iter().map(|p| p.tensor.requires_grad()).collect();
        self.params.iter().for_each(|p| p.tensor.set_requires_grad(false));
        NoGradGuard { store: self, saved }
    }

    /// Hash over the exact bit patterns of the matching parameters.
    pub fn checksum<'a>(&self, params: impl IntoIterator<Item = &'a Parameter>) -> u64 {
        let mut h = DefaultHasher::new();
        for p in params {
            p.name.hash(&mut h);
            for v in p.tensor.data().iter() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Copies values from `other` for every parameter under `prefix` that
    /// both stores share by name; returns how many were copied. Shapes must
    /// agree.
    pub fn copy_matching(&self, other: &ParamStore, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for p in self.params.iter().filter(|p| p.name.starts_with(prefix)) {
            if let Some(src) = other.get(&p.name) {
                if src.tensor.shape() != p.tensor.shape() {
                    return Err(TensorError::shape("copy_matching", p.tensor.shape(), src.tensor.shape()));
                }
                p.tensor.data_mut().copy_from_slice(&src.tensor.data());
                copied += 1;
            }
        }
        Ok(copied)
    }
}

pub struct NoGradGuard<'a> {
    store: &'a ParamStore,
    saved: Vec<bool>,
}

impl Drop for NoGradGuard<'_> {
    fn drop(&mut self) {
        for (p, &on) in self.store.params.iter().zip(&self.saved) {
            p.tensor.set_requires_grad(on);
        }
    }
}
