//! Binds a [`ParamStore`] to a [`Graph`] for one forward/backward pass.

use std::collections::BTreeMap;
use std::collections::HashMap;

use rvid_tensor::{Gradients, Graph, Scalar, Tensor, Var};

use crate::error::Result;
use crate::params::{GradientRecord, ParamStore};

/// One forward (and optionally backward) pass over a parameter store.
/// Each parameter is bound to a single leaf the first time it is used, so
/// gradients accumulate across repeated uses.
pub struct Session<'a, T: Scalar> {
    pub g: Graph<T>,
    store: &'a ParamStore<T>,
    bound: HashMap<String, Var>,
}

impl<'a, T: Scalar> Session<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Session { g: Graph::new(), store, bound: HashMap::new() }
    }

    pub fn inference(store: &'a ParamStore<T>) -> Self {
        Session { g: Graph::inference(), store, bound: HashMap::new() }
    }

    /// Leaf for a named parameter, bound once per session.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let p = self.store.get(name)?;
        let var = if p.requires_grad { self.g.leaf(p.value.clone()) } else { self.g.constant(p.value.clone()) };
        self.bound.insert(name.to_string(), var);
        Ok(var)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.g.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.g.value(v)
    }

    /// Backward pass; returns gradients for every `requires_grad` parameter
    /// in the store, materializing zeros for parameters the loss never
    /// reached.
    pub fn grads(&self, loss: Var) -> Result<GradientRecord<T>> {
        let grads: Gradients<T> = self.g.backward(loss)?;
        let mut map = BTreeMap::new();
        for (name, p) in self.store.iter() {
            if !p.requires_grad {
                continue;
            }
            let g = match self.bound.get(name).and_then(|v| grads.get(*v)) {
                Some(g) => g.clone(),
                None => Tensor::zeros(p.value.shape().to_vec()),
            };
            debug_assert_eq!(g.shape(), p.value.shape());
            map.insert(name.to_string(), g);
        }
        Ok(GradientRecord::new(map))
    }
}
