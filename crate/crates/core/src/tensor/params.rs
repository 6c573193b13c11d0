//! Named, ordered parameter collections shared by the trainable models.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// Ordered map of named parameter tensors. Insertion order is the canonical
/// ordering used for optimizer state, serialization and EMA updates.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid("ParamSet::insert", format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let Some(&i) = self.index.get(name) else {
            return Err(Error::invalid("ParamSet::set", format!("unknown parameter {name}")));
        };
        if self.tensors[i].shape() != tensor.shape() {
            return Err(Error::shape(
                "ParamSet::set",
                format!("{name}: {:?} vs {:?}", self.tensors[i].shape(), tensor.shape()),
            ));
        }
        self.tensors[i] = tensor;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Registers every parameter as a leaf on `graph`; `trainable` controls
    /// whether gradients will flow to them.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Binding {
        let mut vars = HashMap::with_capacity(self.names.len());
        let mut ordered = Vec::with_capacity(self.names.len());
        for (name, tensor) in self.iter() {
            let v = graph.leaf(tensor.clone(), trainable);
            vars.insert(name.to_string(), v);
            ordered.push(v);
        }
        Binding { vars, ordered }
    }

    /// Gradients in canonical parameter order; zeros where a parameter did
    /// not participate in the loss.
    pub fn grads_in_order(&self, binding: &Binding, grads: &Gradients) -> Vec<Tensor> {
        self.tensors
            .iter()
            .zip(binding.ordered.iter())
            .map(|(p, &v)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    }

    /// Relative L2 distance between two parameter sets with the same layout.
    pub fn relative_distance(&self, other: &ParamSet) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in self.tensors.iter().zip(other.tensors.iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                num += (x - y) * (x - y);
                den += y * y;
            }
        }
        (num / den.max(1e-300)).sqrt()
    }
}

/// Graph handles for a bound [`ParamSet`].
pub struct Binding {
    vars: HashMap<String, Var>,
    ordered: Vec<Var>,
}

impl Binding {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} was never registered"))
    }
}

/// In-place exponential moving average: target <- beta * target + (1-beta) * source.
///
/// Operates on raw parameter values, outside any gradient recording.
pub fn ema_update(target: &mut ParamSet, source: &ParamSet, beta: f64) -> Result<()> {
    if target.len() != source.len() {
        return Err(Error::shape(
            "ema_update",
            format!("{} vs {} parameters", target.len(), source.len()),
        ));
    }
    for i in 0..target.tensors.len() {
        let t = &target.tensors[i];
        let s = &source.tensors[i];
        if t.shape() != s.shape() {
            return Err(Error::shape(
                "ema_update",
                format!("parameter {}: {:?} vs {:?}", target.names[i], t.shape(), s.shape()),
            ));
        }
        let data: Vec<f64> = t
            .data()
            .iter()
            .zip(s.data().iter())
            .map(|(&tv, &sv)| beta * tv + (1.0 - beta) * sv)
            .collect();
        target.tensors[i] = Tensor::from_vec_unchecked(t.shape().to_vec(), data);
    }
    Ok(())
}
