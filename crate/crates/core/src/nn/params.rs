use std::collections::BTreeMap;

use rand::Rng as _;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Named parameter tensors. Iteration order is the lexicographic order of
/// the names, which makes every reduction over parameters deterministic.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape().to_vec())))
                .collect(),
        }
    }

    /// Ok when `other` has exactly the same names and shapes.
    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::shape(
                "parameter set",
                format!("{} vs {} tensors", self.tensors.len(), other.tensors.len()),
            ));
        }
        for ((ka, va), (kb, vb)) in self.tensors.iter().zip(&other.tensors) {
            if ka != kb || va.shape() != vb.shape() {
                return Err(Error::shape(
                    "parameter set",
                    format!("{ka}{:?} vs {kb}{:?}", va.shape(), vb.shape()),
                ));
            }
        }
        Ok(())
    }

    /// All values concatenated in name order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Inverse of [`ParameterSet::flatten`] against this set's layout.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_values() {
            return Err(Error::shape(
                "parameter set",
                format!("{} values for {} slots", flat.len(), self.num_values()),
            ));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors.values_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    /// Register every tensor as a differentiable leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Result<Bound<'g>> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| Ok((k.clone(), graph.leaf(v.clone())?)))
            .collect::<Result<_>>()?;
        Ok(Bound { vars })
    }

    /// Register every tensor as a constant (no gradients; cheaper).
    pub fn bind_frozen<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
            .collect();
        Bound { vars }
    }
}

/// A parameter set registered on a graph.
pub struct Bound<'g> {
    vars: BTreeMap<String, Var<'g>>,
}

impl<'g> Bound<'g> {
    pub fn get(&self, name: &str) -> Result<Var<'g>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name}")))
    }

    /// Replace one binding, e.g. to wire in a hand-built operator in tests.
    pub fn set(&mut self, name: &str, var: Var<'g>) {
        self.vars.insert(name.to_string(), var);
    }

    /// Gradient of `loss` with respect to every bound parameter.
    pub fn gradients(&self, loss: Var<'g>) -> Result<ParameterSet> {
        let names: Vec<&String> = self.vars.keys().collect();
        let vars: Vec<Var<'g>> = self.vars.values().copied().collect();
        let grads = loss.graph().gradients(loss, &vars)?;
        Ok(ParameterSet {
            tensors: names.into_iter().cloned().zip(grads).collect(),
        })
    }
}

/// Uniform `±1/sqrt(fan_in)` weights of shape `[fan_in, fan_out]`.
pub(crate) fn fan_in_uniform(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}
