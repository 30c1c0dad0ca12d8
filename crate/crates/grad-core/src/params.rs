//! Named parameter collections. Iteration order is insertion order
//! everywhere so training runs and checkpoints are reproducible.

use crate::error::{GradError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Default, Clone)]
pub struct ParamMap {
    entries: Vec<(String, Tensor)>,
}

/// Graph handles for one bound ParamMap, keyed by parameter name.
pub struct BoundParams {
    vars: Vec<(String, Var)>,
}

impl BoundParams {
    /// Panics on unknown names: a lookup miss is a wiring bug, not a runtime
    /// condition.
    pub fn var(&self, name: &str) -> Var {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("no bound parameter named {name:?}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

impl ParamMap {
    pub fn new() -> Self {
        ParamMap::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        assert!(
            !self.entries.iter().any(|(n, _)| n == name),
            "duplicate parameter name {name:?}"
        );
        self.entries.push((name.to_string(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), &mut *t))
    }

    /// Binds every parameter into the graph as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self.entries.iter().map(|(n, t)| (n.clone(), g.leaf(t))).collect(),
        }
    }

    /// Binds every parameter as a constant; values match [`ParamMap::bind`]
    /// bitwise, but no gradients are tracked. Used on rollout/inference paths.
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self.entries.iter().map(|(n, t)| (n.clone(), g.constant(t))).collect(),
        }
    }

    /// Pulls gradients out of a finished graph, accumulating into each
    /// tensor's grad buffer (so repeated harvests sum, as shard averaging
    /// needs).
    pub fn harvest(&mut self, g: &Graph, bound: &BoundParams) -> Result<()> {
        for (name, var) in &bound.vars {
            let entry = self
                .entries
                .iter_mut()
                .find(|(n, _)| n == name)
                .ok_or_else(|| GradError::MissingGrad(name.clone()))?;
            if !entry.1.requires_grad_flag() {
                continue;
            }
            let grad = g.grad(*var).ok_or_else(|| GradError::MissingGrad(name.clone()))?;
            entry.1.accumulate_grad(grad);
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.entries.iter_mut() {
            t.zero_grad();
        }
    }

    /// Scales every gradient buffer in place (shard averaging).
    pub fn scale_grads(&mut self, c: f64) {
        for (_, t) in self.entries.iter_mut() {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|v| *v *= c);
            }
        }
    }

    /// FNV-1a over parameter names and little-endian value bytes. Two maps
    /// with identical names, order, and bit patterns hash identically.
    pub fn checksum(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for (name, t) in &self.entries {
            eat(name.as_bytes());
            for &v in t.data() {
                eat(&v.to_le_bytes());
            }
        }
        h
    }
}
