use indexmap::IndexMap;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelParams<T = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

/// Tape handles for every parameter of a [`ModelParams`], in insertion order.
pub struct Binding {
    vars: Vec<Var>,
    names: IndexMap<String, usize>,
}

impl Binding {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.names
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Checkpoint(format!("model has no parameter `{name}`")))
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t.with_requires_grad(true));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Registers every parameter on `tape` as a borrowed trainable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> Binding {
        let vars = self.tensors.values().map(|t| tape.param(t)).collect();
        let names = self.tensors.keys().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Binding { vars, names }
    }

    /// Per-parameter gradients from a backward pass, in parameter order.
    /// Parameters the loss does not depend on get zero vectors.
    pub fn collect_grads(&self, binding: &Binding, grads: &mut Gradients<T>) -> Vec<Vec<T>> {
        self.tensors
            .values()
            .zip(&binding.vars)
            .map(|(t, &v)| grads.take(v).unwrap_or_else(|| vec![T::zero(); t.len()]))
            .collect()
    }

    /// Adds per-parameter gradients (as returned by [`collect_grads`]) into each tensor.
    pub fn accumulate_grads(&mut self, grads: &[Vec<T>]) -> Result<()> {
        if grads.len() != self.tensors.len() {
            return Err(Error::dim(
                "accumulate_grads",
                format!("{} gradient buffers for {} parameters", grads.len(), self.tensors.len()),
            ));
        }
        for (t, g) in self.tensors.values_mut().zip(grads) {
            t.accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast::<U>())).collect(),
        }
    }

    /// Checks that every name and shape in `template` appears here with the same shape.
    pub fn check_matches(&self, template: &ModelParams<T>) -> Result<()> {
        for (name, want) in template.iter() {
            let got = self
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if got.shape() != want.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        if let Some(extra) = self.names().find(|n| template.get(n).is_none()) {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(())
    }

    /// FNV-1a over names, shapes and the bit patterns of all values.
    pub fn checksum(&self) -> u64 {
        let mut h = crate::data::hash_emb::Fnv1a::new();
        for (name, t) in self.iter() {
            h.write(name.as_bytes());
            for &d in t.shape() {
                h.write(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.write(&v.to_f64().unwrap_or(f64::NAN).to_bits().to_le_bytes());
            }
        }
        h.finish()
    }
}
