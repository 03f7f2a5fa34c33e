//! Named parameter storage shared by the model, the optimizer and the
//! checkpoint code.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Every trainable array of a model, addressable by id or by dotted name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams {
            names: Vec::new(),
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter `{name}`")));
        }
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    /// Registers (or reuses) the parameter as a tracked leaf of `g`.
    pub fn var<'p>(&'p self, g: &mut Graph<'p, T>, id: ParamId) -> Var {
        g.param(id.0, &self.tensors[id.0])
    }

    /// Replaces the values of `name`, keeping its shape.
    pub fn assign(&mut self, name: &str, values: &Tensor<T>) -> Result<()> {
        let id = self.id(name).ok_or_else(|| Error::Checkpoint {
            name: name.to_string(),
            msg: "no such parameter".into(),
        })?;
        let slot = &mut self.tensors[id.0];
        if slot.shape() != values.shape() {
            return Err(Error::Checkpoint {
                name: name.to_string(),
                msg: format!("shape {} does not match {}", values.shape(), slot.shape()),
            });
        }
        *slot = values.clone();
        Ok(())
    }

    /// Fills every tensor with independent draws from uniform(−scale, scale).
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: f64) {
        for t in &mut self.tensors {
            for x in t.data_mut() {
                *x = T::of(rng.random_range(-scale..scale));
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    pub fn zeros_like(&self) -> Vec<Tensor<T>> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn shapes(&self) -> impl Iterator<Item = (&str, Shape)> {
        self.iter().map(|(n, t)| (n, t.shape()))
    }
}

/// Per-parameter gradient sums, aligned with a [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        Gradients {
            grads: params.zeros_like(),
        }
    }

    /// Adds the leaf gradients left in `g` by its last backward pass.
    pub fn accumulate(&mut self, g: &Graph<'_, T>) {
        for (i, dst) in self.grads.iter_mut().enumerate() {
            let Some(v) = g.param_var(i) else { continue };
            if let Some(src) = g.grad(v) {
                for (d, &s) in dst.data_mut().iter_mut().zip(src) {
                    *d = *d + s;
                }
            }
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.grads.iter()
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.grads {
            for x in t.data_mut() {
                *x = *x * factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }

    pub fn l2_norm(&self) -> f64 {
        let sq = self
            .grads
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|x| {
                let v = x.as_f64();
                v * v
            })
            .sum::<f64>();
        Float::sqrt(sq)
    }
}
